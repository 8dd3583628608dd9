#include "imprg/kernels.hpp"

#include <cmath>

namespace imprg::kernels {
namespace {

void dual_matvec(const double* w, const double* a, const double* at,
                 const double* bias, double* z, double* zt, int rows,
                 int cols) {
  for (int r = 0; r < rows; ++r) {
    const double* wr = w + static_cast<long>(r) * cols;
    double s = 0.0;
    double st = 0.0;
    for (int c = 0; c < cols; ++c) {
      s += wr[c] * a[c];
      st += wr[c] * at[c];
    }
    z[r] = s + bias[r];
    zt[r] = st;
  }
}

void axpy2(double* y0, double* y1, const double* x, double c0, double c1,
           int n) {
  for (int i = 0; i < n; ++i) {
    y0[i] += c0 * x[i];
    y1[i] += c1 * x[i];
  }
}

void weight_grad_accum(double* dw, const double* a, const double* at,
                       double c0, double c1, int n) {
  for (int i = 0; i < n; ++i) {
    dw[i] += c0 * a[i] + c1 * at[i];
  }
}

void adam_step(double* w, double* m, double* v, const double* g,
               const double* gate, int n, double lr, double beta1,
               double beta2, double eps, double bc1, double bc2) {
  const double omb1 = 1.0 - beta1;
  const double omb2 = 1.0 - beta2;
  for (int i = 0; i < n; ++i) {
    if (gate[i] != 0.0) {
      m[i] = beta1 * m[i] + omb1 * g[i];
      v[i] = beta2 * v[i] + omb2 * (g[i] * g[i]);
      const double mhat = m[i] * bc1;
      const double vhat = v[i] * bc2;
      w[i] = w[i] - lr * mhat / (std::sqrt(vhat) + eps);
    }
  }
}

void apply_mask(double* w, const double* gate, int n) {
  for (int i = 0; i < n; ++i) {
    w[i] = w[i] * gate[i];
  }
}

double masked_abs_sum(const double* w, const double* gate, int n) {
  double s = 0.0;
  for (int i = 0; i < n; ++i) {
    s += std::fabs(w[i] * gate[i]);
  }
  return s;
}

}  // namespace

const KernelTable& scalar_table() {
  static const KernelTable table = {
      "scalar",     dual_matvec, axpy2,          weight_grad_accum,
      adam_step,    apply_mask,  masked_abs_sum,
  };
  return table;
}

}  // namespace imprg::kernels
