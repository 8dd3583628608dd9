#include "imprg/kernels.hpp"

#include <cmath>
#include <immintrin.h>

// Elementwise kernels mirror the scalar evaluation order exactly (no fma
// contraction) so they are bit-identical to the reference. The two reduction
// kernels keep four-lane partial sums and therefore differ from the scalar
// result only by reassociation.

namespace imprg::kernels {
namespace {

inline double hsum(__m256d v) {
  __m128d lo = _mm256_castpd256_pd128(v);
  __m128d hi = _mm256_extractf128_pd(v, 1);
  lo = _mm_add_pd(lo, hi);
  __m128d shuf = _mm_unpackhi_pd(lo, lo);
  return _mm_cvtsd_f64(_mm_add_sd(lo, shuf));
}

void dual_matvec(const double* w, const double* a, const double* at,
                 const double* bias, double* z, double* zt, int rows,
                 int cols) {
  for (int r = 0; r < rows; ++r) {
    const double* wr = w + static_cast<long>(r) * cols;
    __m256d acc = _mm256_setzero_pd();
    __m256d acct = _mm256_setzero_pd();
    int c = 0;
    for (; c + 4 <= cols; c += 4) {
      const __m256d wv = _mm256_loadu_pd(wr + c);
      acc = _mm256_fmadd_pd(wv, _mm256_loadu_pd(a + c), acc);
      acct = _mm256_fmadd_pd(wv, _mm256_loadu_pd(at + c), acct);
    }
    double s = hsum(acc);
    double st = hsum(acct);
    for (; c < cols; ++c) {
      s += wr[c] * a[c];
      st += wr[c] * at[c];
    }
    z[r] = s + bias[r];
    zt[r] = st;
  }
}

void axpy2(double* y0, double* y1, const double* x, double c0, double c1,
           int n) {
  const __m256d c0v = _mm256_set1_pd(c0);
  const __m256d c1v = _mm256_set1_pd(c1);
  int i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d xv = _mm256_loadu_pd(x + i);
    __m256d y0v = _mm256_loadu_pd(y0 + i);
    __m256d y1v = _mm256_loadu_pd(y1 + i);
    y0v = _mm256_add_pd(y0v, _mm256_mul_pd(c0v, xv));
    y1v = _mm256_add_pd(y1v, _mm256_mul_pd(c1v, xv));
    _mm256_storeu_pd(y0 + i, y0v);
    _mm256_storeu_pd(y1 + i, y1v);
  }
  for (; i < n; ++i) {
    y0[i] += c0 * x[i];
    y1[i] += c1 * x[i];
  }
}

void weight_grad_accum(double* dw, const double* a, const double* at,
                       double c0, double c1, int n) {
  const __m256d c0v = _mm256_set1_pd(c0);
  const __m256d c1v = _mm256_set1_pd(c1);
  int i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d p0 = _mm256_mul_pd(c0v, _mm256_loadu_pd(a + i));
    const __m256d p1 = _mm256_mul_pd(c1v, _mm256_loadu_pd(at + i));
    const __m256d s = _mm256_add_pd(p0, p1);
    const __m256d d = _mm256_add_pd(_mm256_loadu_pd(dw + i), s);
    _mm256_storeu_pd(dw + i, d);
  }
  for (; i < n; ++i) {
    dw[i] += c0 * a[i] + c1 * at[i];
  }
}

void adam_step(double* w, double* m, double* v, const double* g,
               const double* gate, int n, double lr, double beta1,
               double beta2, double eps, double bc1, double bc2) {
  const double omb1 = 1.0 - beta1;
  const double omb2 = 1.0 - beta2;
  const __m256d b1v = _mm256_set1_pd(beta1);
  const __m256d b2v = _mm256_set1_pd(beta2);
  const __m256d omb1v = _mm256_set1_pd(omb1);
  const __m256d omb2v = _mm256_set1_pd(omb2);
  const __m256d bc1v = _mm256_set1_pd(bc1);
  const __m256d bc2v = _mm256_set1_pd(bc2);
  const __m256d lrv = _mm256_set1_pd(lr);
  const __m256d epsv = _mm256_set1_pd(eps);
  const __m256d zero = _mm256_setzero_pd();
  int i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d gv = _mm256_loadu_pd(g + i);
    const __m256d gatev = _mm256_loadu_pd(gate + i);
    const __m256d active = _mm256_cmp_pd(gatev, zero, _CMP_NEQ_OQ);
    const __m256d mold = _mm256_loadu_pd(m + i);
    const __m256d vold = _mm256_loadu_pd(v + i);
    const __m256d wold = _mm256_loadu_pd(w + i);
    const __m256d mnew =
        _mm256_add_pd(_mm256_mul_pd(b1v, mold), _mm256_mul_pd(omb1v, gv));
    const __m256d vnew = _mm256_add_pd(
        _mm256_mul_pd(b2v, vold),
        _mm256_mul_pd(omb2v, _mm256_mul_pd(gv, gv)));
    const __m256d mhat = _mm256_mul_pd(mnew, bc1v);
    const __m256d vhat = _mm256_mul_pd(vnew, bc2v);
    const __m256d num = _mm256_mul_pd(lrv, mhat);
    const __m256d den = _mm256_add_pd(_mm256_sqrt_pd(vhat), epsv);
    const __m256d wnew = _mm256_sub_pd(wold, _mm256_div_pd(num, den));
    _mm256_storeu_pd(m + i, _mm256_blendv_pd(mold, mnew, active));
    _mm256_storeu_pd(v + i, _mm256_blendv_pd(vold, vnew, active));
    _mm256_storeu_pd(w + i, _mm256_blendv_pd(wold, wnew, active));
  }
  for (; i < n; ++i) {
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
  int i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d p = _mm256_mul_pd(_mm256_loadu_pd(w + i),
                                    _mm256_loadu_pd(gate + i));
    _mm256_storeu_pd(w + i, p);
  }
  for (; i < n; ++i) {
    w[i] = w[i] * gate[i];
  }
}

double masked_abs_sum(const double* w, const double* gate, int n) {
  const __m256d absmask = _mm256_castsi256_pd(
      _mm256_set1_epi64x(0x7fffffffffffffffLL));
  __m256d acc = _mm256_setzero_pd();
  int i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d p =
        _mm256_mul_pd(_mm256_loadu_pd(w + i), _mm256_loadu_pd(gate + i));
    acc = _mm256_add_pd(acc, _mm256_and_pd(absmask, p));
  }
  double s = hsum(acc);
  for (; i < n; ++i) {
    s += std::fabs(w[i] * gate[i]);
  }
  return s;
}

}  // namespace

const KernelTable* avx2_table_impl() {
  static const KernelTable table = {
      "avx2",      dual_matvec, axpy2,          weight_grad_accum,
      adam_step,   apply_mask,  masked_abs_sum,
  };
  return &table;
}

}  // namespace imprg::kernels
