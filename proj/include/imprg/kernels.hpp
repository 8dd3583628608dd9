#pragma once

namespace imprg::kernels {

enum class Backend { kAuto, kScalar, kAvx2 };

// Hot-loop primitives shared by the network engine and the optimizer.
// Every entry has a scalar reference implementation. Wider backends must
// match it bit-for-bit on the elementwise kernels; the reduction kernels
// (dual_matvec, masked_abs_sum) may reassociate partial sums.
struct KernelTable {
  const char* name;

  // z = W a + bias, zt = W at.  W is row-major, rows x cols.
  void (*dual_matvec)(const double* w, const double* a, const double* at,
                      const double* bias, double* z, double* zt, int rows,
                      int cols);

  // y0 += c0 * x;  y1 += c1 * x.
  void (*axpy2)(double* y0, double* y1, const double* x, double c0, double c1,
                int n);

  // dw += c0 * a + c1 * at.
  void (*weight_grad_accum)(double* dw, const double* a, const double* at,
                            double c0, double c1, int n);

  // Adam step. Coordinates with gate == 0.0 are frozen: weight and both
  // moment entries stay untouched. bc1/bc2 are the bias corrections
  // 1/(1-beta1^t), 1/(1-beta2^t).
  void (*adam_step)(double* w, double* m, double* v, const double* g,
                    const double* gate, int n, double lr, double beta1,
                    double beta2, double eps, double bc1, double bc2);

  // w[i] *= gate[i].
  void (*apply_mask)(double* w, const double* gate, int n);

  // sum_i |w[i] * gate[i]|
  double (*masked_abs_sum)(const double* w, const double* gate, int n);
};

const KernelTable& scalar_table();

// Null when the build target or the running CPU lacks AVX2+FMA.
const KernelTable* avx2_table();

bool cpu_has_avx2();

// kAuto honours the IMP_RG_KERNELS environment variable (auto|scalar|avx2)
// and falls back to CPU probing. Forcing kAvx2 on an unsupported machine
// throws.
const KernelTable& resolve(Backend backend);

Backend parse_backend(const char* name);
const char* backend_name(Backend backend);

}  // namespace imprg::kernels
