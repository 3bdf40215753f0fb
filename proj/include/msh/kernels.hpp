// Hot inner loops: dense matrix products for the recurrent nets and the
// packed Hamming scan for search. Each kernel has a serial reference and an
// OpenMP variant; the unqualified name dispatches between them. Every output
// element has a single writer and a fixed accumulation order, so serial and
// parallel paths produce bit-identical results.
#pragma once

#include <cstdint>
#include <vector>

#include "msh/matrix.hpp"

namespace msh::kernels {

// Work threshold (in multiply-accumulates) below which dispatch stays serial.
inline constexpr std::size_t kParallelMinWork = 16384;

// Global switch, mostly for benchmarking and tests.
bool parallel_enabled();
void set_parallel_enabled(bool on);

// out += a * b^T          a: m x k, b: n x k, out: m x n
void mul_nt_serial(const Matrix& a, const Matrix& b, Matrix& out);
void mul_nt_omp(const Matrix& a, const Matrix& b, Matrix& out);
void mul_nt(const Matrix& a, const Matrix& b, Matrix& out);

// out += a * b            a: m x k, b: k x n, out: m x n
void mul_nn_serial(const Matrix& a, const Matrix& b, Matrix& out);
void mul_nn_omp(const Matrix& a, const Matrix& b, Matrix& out);
void mul_nn(const Matrix& a, const Matrix& b, Matrix& out);

// out += a^T * b          a: r x m, b: r x n, out: m x n
void mul_tn_serial(const Matrix& a, const Matrix& b, Matrix& out);
void mul_tn_omp(const Matrix& a, const Matrix& b, Matrix& out);
void mul_tn(const Matrix& a, const Matrix& b, Matrix& out);

// out[j] += sum over rows of a(:, j)
void col_sum_accum(const Matrix& a, std::vector<double>& out);

// Broadcast-add a row vector to every row.
void add_row_broadcast(Matrix& m, const std::vector<double>& row);

// Hamming distances of one packed query against a flat array of packed
// entries (entry-major, words_per_code words each).
void hamming_scan_serial(const std::uint64_t* query, const std::uint64_t* entries,
                         std::size_t n_entries, std::size_t words_per_code,
                         std::uint32_t* out);
void hamming_scan_omp(const std::uint64_t* query, const std::uint64_t* entries,
                      std::size_t n_entries, std::size_t words_per_code,
                      std::uint32_t* out);
void hamming_scan(const std::uint64_t* query, const std::uint64_t* entries,
                  std::size_t n_entries, std::size_t words_per_code, std::uint32_t* out);

}  // namespace msh::kernels
