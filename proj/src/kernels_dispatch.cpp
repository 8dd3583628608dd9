#include "imprg/kernels.hpp"

#include <cstdlib>
#include <cstring>
#include <stdexcept>
#include <string>

namespace imprg::kernels {

#if defined(IMPRG_HAVE_AVX2_BUILD)
const KernelTable* avx2_table_impl();
#endif

bool cpu_has_avx2() {
#if defined(IMPRG_HAVE_AVX2_BUILD)
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

const KernelTable* avx2_table() {
#if defined(IMPRG_HAVE_AVX2_BUILD)
  if (cpu_has_avx2()) {
    return avx2_table_impl();
  }
#endif
  return nullptr;
}

Backend parse_backend(const char* name) {
  if (std::strcmp(name, "auto") == 0) return Backend::kAuto;
  if (std::strcmp(name, "scalar") == 0) return Backend::kScalar;
  if (std::strcmp(name, "avx2") == 0) return Backend::kAvx2;
  throw std::invalid_argument(std::string("unknown kernel backend: ") + name);
}

const char* backend_name(Backend backend) {
  switch (backend) {
    case Backend::kAuto:
      return "auto";
    case Backend::kScalar:
      return "scalar";
    case Backend::kAvx2:
      return "avx2";
  }
  return "auto";
}

const KernelTable& resolve(Backend backend) {
  if (backend == Backend::kAuto) {
    if (const char* env = std::getenv("IMP_RG_KERNELS")) {
      backend = parse_backend(env);
    }
  }
  switch (backend) {
    case Backend::kScalar:
      return scalar_table();
    case Backend::kAvx2: {
      const KernelTable* t = avx2_table();
      if (t == nullptr) {
        throw std::runtime_error("avx2 kernels requested but unavailable");
      }
      return *t;
    }
    case Backend::kAuto:
    default: {
      const KernelTable* t = avx2_table();
      return t != nullptr ? *t : scalar_table();
    }
  }
}

}  // namespace imprg::kernels
