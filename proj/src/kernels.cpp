#include "msh/kernels.hpp"

#include <atomic>
#include <bit>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace msh::kernels {

namespace {
std::atomic<bool> g_parallel{true};

inline bool go_parallel(std::size_t work) {
#ifdef _OPENMP
  // Inside an enclosing parallel region (codebook build, eval sweep) the
  // kernels stay serial; nesting only adds scheduling overhead.
  return g_parallel.load(std::memory_order_relaxed) && !omp_in_parallel() &&
         work >= kParallelMinWork;
#else
  (void)work;
  return false;
#endif
}
}  // namespace

bool parallel_enabled() { return g_parallel.load(std::memory_order_relaxed); }
void set_parallel_enabled(bool on) { g_parallel.store(on, std::memory_order_relaxed); }

// ---- out += a * b^T ------------------------------------------------------
// Row of a dotted with row of b: both contiguous.

static inline void mul_nt_rows(const Matrix& a, const Matrix& b, Matrix& out,
                               std::size_t i0, std::size_t i1) {
  const std::size_t k = a.cols();
  const std::size_t n = b.rows();
  for (std::size_t i = i0; i < i1; ++i) {
    const double* ai = a.row(i);
    double* oi = out.row(i);
    for (std::size_t j = 0; j < n; ++j) {
      const double* bj = b.row(j);
      double acc = 0.0;
      for (std::size_t t = 0; t < k; ++t) acc += ai[t] * bj[t];
      oi[j] += acc;
    }
  }
}

void mul_nt_serial(const Matrix& a, const Matrix& b, Matrix& out) {
  mul_nt_rows(a, b, out, 0, a.rows());
}

void mul_nt_omp(const Matrix& a, const Matrix& b, Matrix& out) {
#ifdef _OPENMP
  const std::int64_t m = static_cast<std::int64_t>(a.rows());
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < m; ++i) {
    mul_nt_rows(a, b, out, static_cast<std::size_t>(i), static_cast<std::size_t>(i) + 1);
  }
#else
  mul_nt_serial(a, b, out);
#endif
}

void mul_nt(const Matrix& a, const Matrix& b, Matrix& out) {
  if (a.cols() != b.cols()) throw ShapeError("mul_nt: inner dimension mismatch");
  check_shape(out, a.rows(), b.rows(), "mul_nt output");
  if (go_parallel(a.rows() * a.cols() * b.rows())) {
    mul_nt_omp(a, b, out);
  } else {
    mul_nt_serial(a, b, out);
  }
}

// ---- out += a * b --------------------------------------------------------
// axpy over rows of b keeps the inner loop contiguous.

static inline void mul_nn_rows(const Matrix& a, const Matrix& b, Matrix& out,
                               std::size_t i0, std::size_t i1) {
  const std::size_t k = a.cols();
  const std::size_t n = b.cols();
  for (std::size_t i = i0; i < i1; ++i) {
    const double* ai = a.row(i);
    double* oi = out.row(i);
    for (std::size_t t = 0; t < k; ++t) {
      const double coef = ai[t];
      if (coef == 0.0) continue;
      const double* bt = b.row(t);
      for (std::size_t j = 0; j < n; ++j) oi[j] += coef * bt[j];
    }
  }
}

void mul_nn_serial(const Matrix& a, const Matrix& b, Matrix& out) {
  mul_nn_rows(a, b, out, 0, a.rows());
}

void mul_nn_omp(const Matrix& a, const Matrix& b, Matrix& out) {
#ifdef _OPENMP
  const std::int64_t m = static_cast<std::int64_t>(a.rows());
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < m; ++i) {
    mul_nn_rows(a, b, out, static_cast<std::size_t>(i), static_cast<std::size_t>(i) + 1);
  }
#else
  mul_nn_serial(a, b, out);
#endif
}

void mul_nn(const Matrix& a, const Matrix& b, Matrix& out) {
  if (a.cols() != b.rows()) throw ShapeError("mul_nn: inner dimension mismatch");
  check_shape(out, a.rows(), b.cols(), "mul_nn output");
  if (go_parallel(a.rows() * a.cols() * b.cols())) {
    mul_nn_omp(a, b, out);
  } else {
    mul_nn_serial(a, b, out);
  }
}

// ---- out += a^T * b ------------------------------------------------------
// Parallel over output rows; each accumulates over the shared leading dim.

static inline void mul_tn_cols(const Matrix& a, const Matrix& b, Matrix& out,
                               std::size_t j0, std::size_t j1) {
  const std::size_t r = a.rows();
  const std::size_t n = b.cols();
  for (std::size_t j = j0; j < j1; ++j) {
    double* oj = out.row(j);
    for (std::size_t t = 0; t < r; ++t) {
      const double coef = a(t, j);
      if (coef == 0.0) continue;
      const double* bt = b.row(t);
      for (std::size_t c = 0; c < n; ++c) oj[c] += coef * bt[c];
    }
  }
}

void mul_tn_serial(const Matrix& a, const Matrix& b, Matrix& out) {
  mul_tn_cols(a, b, out, 0, a.cols());
}

void mul_tn_omp(const Matrix& a, const Matrix& b, Matrix& out) {
#ifdef _OPENMP
  const std::int64_t m = static_cast<std::int64_t>(a.cols());
#pragma omp parallel for schedule(static)
  for (std::int64_t j = 0; j < m; ++j) {
    mul_tn_cols(a, b, out, static_cast<std::size_t>(j), static_cast<std::size_t>(j) + 1);
  }
#else
  mul_tn_serial(a, b, out);
#endif
}

void mul_tn(const Matrix& a, const Matrix& b, Matrix& out) {
  if (a.rows() != b.rows()) throw ShapeError("mul_tn: leading dimension mismatch");
  check_shape(out, a.cols(), b.cols(), "mul_tn output");
  if (go_parallel(a.rows() * a.cols() * b.cols())) {
    mul_tn_omp(a, b, out);
  } else {
    mul_tn_serial(a, b, out);
  }
}

void col_sum_accum(const Matrix& a, std::vector<double>& out) {
  if (out.size() != a.cols()) throw ShapeError("col_sum_accum: size mismatch");
  for (std::size_t r = 0; r < a.rows(); ++r) {
    const double* ar = a.row(r);
    for (std::size_t c = 0; c < a.cols(); ++c) out[c] += ar[c];
  }
}

void add_row_broadcast(Matrix& m, const std::vector<double>& row) {
  if (row.size() != m.cols()) throw ShapeError("add_row_broadcast: size mismatch");
  for (std::size_t r = 0; r < m.rows(); ++r) {
    double* mr = m.row(r);
    for (std::size_t c = 0; c < m.cols(); ++c) mr[c] += row[c];
  }
}

// ---- packed Hamming scan -------------------------------------------------

static inline std::uint32_t hamming_one(const std::uint64_t* q, const std::uint64_t* e,
                                        std::size_t words) {
  std::uint32_t d = 0;
  for (std::size_t w = 0; w < words; ++w) d += static_cast<std::uint32_t>(std::popcount(q[w] ^ e[w]));
  return d;
}

void hamming_scan_serial(const std::uint64_t* query, const std::uint64_t* entries,
                         std::size_t n_entries, std::size_t words_per_code,
                         std::uint32_t* out) {
  for (std::size_t i = 0; i < n_entries; ++i) {
    out[i] = hamming_one(query, entries + i * words_per_code, words_per_code);
  }
}

void hamming_scan_omp(const std::uint64_t* query, const std::uint64_t* entries,
                      std::size_t n_entries, std::size_t words_per_code,
                      std::uint32_t* out) {
#ifdef _OPENMP
  const std::int64_t n = static_cast<std::int64_t>(n_entries);
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < n; ++i) {
    out[i] = hamming_one(query, entries + static_cast<std::size_t>(i) * words_per_code,
                         words_per_code);
  }
#else
  hamming_scan_serial(query, entries, n_entries, words_per_code, out);
#endif
}

void hamming_scan(const std::uint64_t* query, const std::uint64_t* entries,
                  std::size_t n_entries, std::size_t words_per_code, std::uint32_t* out) {
  if (go_parallel(n_entries * words_per_code * 8)) {
    hamming_scan_omp(query, entries, n_entries, words_per_code, out);
  } else {
    hamming_scan_serial(query, entries, n_entries, words_per_code, out);
  }
}

}  // namespace msh::kernels
