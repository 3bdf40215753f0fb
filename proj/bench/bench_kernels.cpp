// Compares the serial reference kernels against their OpenMP variants on
// training- and search-shaped workloads, plus the end-to-end encode and
// search paths. Build and run: ./bench_kernels [repeats]
#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <string>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "msh/encoder.hpp"
#include "msh/index.hpp"
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

double time_best_ms(int repeats, const std::function<void()>& fn) {
  double best = 1e300;
  for (int r = 0; r < repeats; ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    fn();
    const auto t1 = std::chrono::steady_clock::now();
    best = std::min(best, std::chrono::duration<double, std::milli>(t1 - t0).count());
  }
  return best;
}

void row(const char* name, double serial_ms, double omp_ms) {
  std::printf("%-36s %10.3f ms %10.3f ms %8.2fx\n", name, serial_ms, omp_ms,
              serial_ms / omp_ms);
}

}  // namespace

int main(int argc, char** argv) {
  const int repeats = argc > 1 ? std::atoi(argv[1]) : 7;
#ifdef _OPENMP
  std::printf("openmp enabled, max threads %d\n", omp_get_max_threads());
#else
  std::printf("built without openmp; parallel variants fall back to serial\n");
#endif
  std::printf("%-36s %13s %13s %9s\n", "kernel", "serial", "openmp", "speedup");

  // Batch-training shapes: batch 40, feature 32, gates 4*64.
  {
    const Matrix x = random_matrix(40, 64, 1);
    const Matrix w = random_matrix(256, 64, 2);
    Matrix out(40, 256, 0.0);
    const double s = time_best_ms(repeats, [&] {
      for (int i = 0; i < 200; ++i) kernels::mul_nt_serial(x, w, out);
    });
    const double p = time_best_ms(repeats, [&] {
      for (int i = 0; i < 200; ++i) kernels::mul_nt_omp(x, w, out);
    });
    row("mul_nt 40x64 * (256x64)^T x200", s, p);
  }
  {
    const Matrix a = random_matrix(40, 256, 3);
    const Matrix b = random_matrix(256, 64, 4);
    Matrix out(40, 64, 0.0);
    const double s = time_best_ms(repeats, [&] {
      for (int i = 0; i < 200; ++i) kernels::mul_nn_serial(a, b, out);
    });
    const double p = time_best_ms(repeats, [&] {
      for (int i = 0; i < 200; ++i) kernels::mul_nn_omp(a, b, out);
    });
    row("mul_nn 40x256 * 256x64 x200", s, p);
  }
  {
    const Matrix a = random_matrix(40, 256, 5);
    const Matrix b = random_matrix(40, 64, 6);
    Matrix out(256, 64, 0.0);
    const double s = time_best_ms(repeats, [&] {
      for (int i = 0; i < 200; ++i) kernels::mul_tn_serial(a, b, out);
    });
    const double p = time_best_ms(repeats, [&] {
      for (int i = 0; i < 200; ++i) kernels::mul_tn_omp(a, b, out);
    });
    row("mul_tn (40x256)^T * 40x64 x200", s, p);
  }

  // Search shape: one 256-bit query against 42.5k packed codes.
  {
    Rng rng(7);
    const std::size_t n = 42500, words = 4;
    std::vector<std::uint64_t> entries(n * words);
    for (auto& w : entries) w = rng.next_u64();
    std::uint64_t query[4];
    for (auto& w : query) w = rng.next_u64();
    std::vector<std::uint32_t> dist(n);
    const double s = time_best_ms(repeats, [&] {
      for (int i = 0; i < 50; ++i) {
        kernels::hamming_scan_serial(query, entries.data(), n, words, dist.data());
      }
    });
    const double p = time_best_ms(repeats, [&] {
      for (int i = 0; i < 50; ++i) {
        kernels::hamming_scan_omp(query, entries.data(), n, words, dist.data());
      }
    });
    row("hamming_scan 42500 x 256b x50", s, p);
  }

  // End-to-end paths under the dispatcher: codebook build and top-k search.
  {
    EncoderModel enc;
    enc.init(64, 32, 8);
    std::vector<FeatureSequence> db(200);
    for (std::size_t v = 0; v < db.size(); ++v) {
      db[v].video_id = v;
      db[v].clips = random_matrix(25, 32, 100 + v);
    }
    kernels::set_parallel_enabled(false);
    const double s = time_best_ms(std::max(1, repeats / 2), [&] {
      (void)build_codebook(enc, db, CodebookMode::kPlain);
    });
    kernels::set_parallel_enabled(true);
    const double p = time_best_ms(std::max(1, repeats / 2), [&] {
      (void)build_codebook(enc, db, CodebookMode::kPlain);
    });
    row("build_codebook 200 videos x 25 clips", s, p);
  }
  {
    const Codebook cb = random_codebook(42500, 256, 9);
    Rng rng(10);
    Bitcode q(256);
    for (std::uint32_t b = 0; b < 256; ++b) q.set_bit(b, rng.next_u64() & 1);
    kernels::set_parallel_enabled(false);
    const double s = time_best_ms(repeats, [&] {
      for (int i = 0; i < 20; ++i) (void)search(cb, q, 20);
    });
    kernels::set_parallel_enabled(true);
    const double p = time_best_ms(repeats, [&] {
      for (int i = 0; i < 20; ++i) (void)search(cb, q, 20);
    });
    row("search top-20 of 42500 x 256b x20", s, p);
  }
  return 0;
}
