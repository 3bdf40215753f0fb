#include <doctest.h>

#include "msh/kernels.hpp"
#include "msh/rng.hpp"

using namespace msh;

namespace {
Matrix random_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  Rng rng(seed);
  Matrix m(rows, cols);
  for (std::size_t i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(-1.0, 1.0);
  return m;
}
}  // namespace

TEST_CASE("parallel matrix kernels are bit-identical to the serial reference") {
  const struct {
    std::size_t m, k, n;
  } shapes[] = {{1, 1, 1}, {7, 13, 5}, {40, 64, 128}, {33, 97, 61}};

  for (const auto& s : shapes) {
    CAPTURE(s.m);
    CAPTURE(s.k);
    CAPTURE(s.n);
    {
      Matrix a = random_matrix(s.m, s.k, 1), b = random_matrix(s.n, s.k, 2);
      Matrix serial(s.m, s.n, 0.1), parallel(s.m, s.n, 0.1);
      kernels::mul_nt_serial(a, b, serial);
      kernels::mul_nt_omp(a, b, parallel);
      CHECK(serial == parallel);
    }
    {
      Matrix a = random_matrix(s.m, s.k, 3), b = random_matrix(s.k, s.n, 4);
      Matrix serial(s.m, s.n, -0.2), parallel(s.m, s.n, -0.2);
      kernels::mul_nn_serial(a, b, serial);
      kernels::mul_nn_omp(a, b, parallel);
      CHECK(serial == parallel);
    }
    {
      Matrix a = random_matrix(s.k, s.m, 5), b = random_matrix(s.k, s.n, 6);
      Matrix serial(s.m, s.n, 0.0), parallel(s.m, s.n, 0.0);
      kernels::mul_tn_serial(a, b, serial);
      kernels::mul_tn_omp(a, b, parallel);
      CHECK(serial == parallel);
    }
  }
}

TEST_CASE("hamming scan parallel path matches the serial reference") {
  Rng rng(7);
  const std::size_t n_entries = 5000, words = 4;
  std::vector<std::uint64_t> entries(n_entries * words);
  for (auto& w : entries) w = rng.next_u64();
  std::uint64_t query[words];
  for (auto& w : query) w = rng.next_u64();

  std::vector<std::uint32_t> serial(n_entries), parallel(n_entries);
  kernels::hamming_scan_serial(query, entries.data(), n_entries, words, serial.data());
  kernels::hamming_scan_omp(query, entries.data(), n_entries, words, parallel.data());
  CHECK(serial == parallel);
}

TEST_CASE("dispatch honors the global parallel switch") {
  Matrix a = random_matrix(64, 64, 8), b = random_matrix(64, 64, 9);
  Matrix with_omp(64, 64, 0.0), without_omp(64, 64, 0.0);
  kernels::set_parallel_enabled(true);
  kernels::mul_nt(a, b, with_omp);
  kernels::set_parallel_enabled(false);
  kernels::mul_nt(a, b, without_omp);
  kernels::set_parallel_enabled(true);
  CHECK(with_omp == without_omp);
}

TEST_CASE("kernel shape validation") {
  Matrix a(2, 3), b(2, 4), out(2, 2);
  CHECK_THROWS_AS(kernels::mul_nt(a, b, out), ShapeError);
  CHECK_THROWS_AS(kernels::mul_nn(a, b, out), ShapeError);
  Matrix c(3, 4);
  CHECK_THROWS_AS(kernels::mul_tn(a, c, out), ShapeError);
}
