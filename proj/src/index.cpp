#include "msh/index.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <unordered_set>

#include "binio.hpp"
#include "msh/kernels.hpp"
#include "msh/rng.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace msh {

std::uint32_t hamming(const Bitcode& a, const Bitcode& b) {
  if (a.n_bits() != b.n_bits()) {
    throw ShapeError("hamming: width mismatch (" + std::to_string(a.n_bits()) + " vs " +
                     std::to_string(b.n_bits()) + ")");
  }
  std::uint32_t d = 0;
  kernels::hamming_scan_serial(a.words(), b.words(), 1, a.n_words(), &d);
  return d;
}

Codebook::Codebook(std::uint32_t n_bits)
    : n_bits_(n_bits), words_per_code_((n_bits + 63) / 64) {
  if (n_bits == 0) throw ConfigError("codebook needs a positive code width");
}

std::uint64_t Codebook::add(std::uint64_t video_id, float alpha, const Bitcode& code) {
  if (code.n_bits() != n_bits_) throw ShapeError("codebook add: width mismatch");
  const std::uint64_t id = entry_ids_.size();
  entry_ids_.push_back(id);
  video_ids_.push_back(video_id);
  alphas_.push_back(alpha);
  words_.insert(words_.end(), code.words(), code.words() + words_per_code_);
  return id;
}

Bitcode Codebook::code(std::size_t i) const {
  Bitcode c(n_bits_);
  std::copy(words_.begin() + i * words_per_code_, words_.begin() + (i + 1) * words_per_code_,
            c.words());
  return c;
}

std::size_t Codebook::n_alphas() const {
  std::vector<float> seen;
  for (float a : alphas_) {
    if (std::find(seen.begin(), seen.end(), a) == seen.end()) seen.push_back(a);
  }
  return seen.size();
}

namespace {
constexpr char kCodebookMagic[4] = {'M', 'S', 'H', 'C'};
constexpr std::uint32_t kCodebookVersion = 1;
}  // namespace

void Codebook::save(const std::string& path) const {
  auto os = io::open_output(path, "codebook file");
  io::write_magic(os, kCodebookMagic);
  io::write_u32(os, kCodebookVersion);
  io::write_u32(os, n_bits_);
  io::write_u64(os, size());
  for (std::size_t i = 0; i < size(); ++i) {
    io::write_u64(os, entry_ids_[i]);
    io::write_u64(os, video_ids_[i]);
    io::write_f32(os, alphas_[i]);
    for (std::size_t w = 0; w < words_per_code_; ++w) {
      io::write_u64(os, words_[i * words_per_code_ + w]);
    }
  }
  if (!os) throw IoError("failed writing codebook: " + path);
}

Codebook Codebook::load(const std::string& path) {
  auto is = io::open_input(path, "codebook file");
  io::expect_magic(is, kCodebookMagic, "codebook file");
  const std::uint32_t version = io::read_u32(is, "codebook version");
  if (version != kCodebookVersion) {
    throw FormatError("unsupported codebook version " + std::to_string(version));
  }
  const std::uint32_t n_bits = io::read_u32(is, "codebook n_bits");
  if (n_bits == 0) throw FormatError("codebook header has zero width");
  const std::uint64_t count = io::read_u64(is, "codebook entry count");
  Codebook cb(n_bits);
  cb.entry_ids_.reserve(count);
  cb.video_ids_.reserve(count);
  cb.alphas_.reserve(count);
  cb.words_.reserve(count * cb.words_per_code_);
  for (std::uint64_t i = 0; i < count; ++i) {
    cb.entry_ids_.push_back(io::read_u64(is, "entry id"));
    cb.video_ids_.push_back(io::read_u64(is, "video id"));
    cb.alphas_.push_back(io::read_f32(is, "alpha tag"));
    for (std::size_t w = 0; w < cb.words_per_code_; ++w) {
      cb.words_.push_back(io::read_u64(is, "code words"));
    }
  }
  return cb;
}

Codebook build_codebook(const EncoderModel& encoder,
                        const std::vector<FeatureSequence>& database, CodebookMode mode,
                        const std::vector<double>& alpha_grid) {
  if (database.empty()) throw ConfigError("build_codebook: empty database");
  std::vector<double> alphas;
  if (mode == CodebookMode::kDuplicated) {
    alphas = alpha_grid;
    if (alphas.empty()) throw ConfigError("duplicated codebook needs an alpha grid");
  } else {
    alphas = {1.0};
  }

  // Encode (video, alpha) pairs in parallel, then insert in a fixed order so
  // entry ids do not depend on scheduling.
  const std::size_t jobs = database.size() * alphas.size();
  std::vector<Bitcode> codes(jobs);
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic) if (kernels::parallel_enabled())
#endif
  for (std::int64_t j = 0; j < static_cast<std::int64_t>(jobs); ++j) {
    const std::size_t v = static_cast<std::size_t>(j) / alphas.size();
    const std::size_t a = static_cast<std::size_t>(j) % alphas.size();
    const Matrix prefix = clip_prefix(database[v].clips, alphas[a]);
    codes[j] = encode_sequence(encoder, prefix).final;
  }

  Codebook cb(static_cast<std::uint32_t>(encoder.n_bits));
  for (std::size_t v = 0; v < database.size(); ++v) {
    for (std::size_t a = 0; a < alphas.size(); ++a) {
      cb.add(database[v].video_id, static_cast<float>(alphas[a]),
             codes[v * alphas.size() + a]);
    }
  }
  return cb;
}

RetrievalResult search(const Codebook& cb, const Bitcode& query, std::size_t k,
                       SearchStats* stats) {
  if (query.n_bits() != cb.n_bits()) {
    throw ShapeError("search: query width " + std::to_string(query.n_bits()) +
                     " does not match codebook width " + std::to_string(cb.n_bits()));
  }
  if (k == 0) throw ConfigError("search: k must be >= 1");
  const std::size_t n = cb.size();
  k = std::min(k, n);

  std::vector<std::uint32_t> dist(n);
  kernels::hamming_scan(query.words(), cb.flat_words(), n, cb.words_per_code(), dist.data());
  if (stats != nullptr) stats->distance_evals += n;

  // Bounded selection: max-heap of the k best (distance, entry index), worst
  // on top. Entry index order doubles as the tie rule.
  const auto worse = [&dist](std::size_t a, std::size_t b) {
    return dist[a] != dist[b] ? dist[a] < dist[b] : a < b;  // "less" = better
  };
  std::vector<std::size_t> heap;
  heap.reserve(k + 1);
  for (std::size_t i = 0; i < n; ++i) {
    if (heap.size() < k) {
      heap.push_back(i);
      std::push_heap(heap.begin(), heap.end(), worse);
    } else if (worse(i, heap.front())) {
      std::pop_heap(heap.begin(), heap.end(), worse);
      heap.back() = i;
      std::push_heap(heap.begin(), heap.end(), worse);
    }
  }
  std::sort_heap(heap.begin(), heap.end(), worse);

  RetrievalResult result;
  result.items.reserve(heap.size());
  for (std::size_t idx : heap) {
    result.items.push_back(
        ResultItem{cb.video_id(idx), cb.alpha(idx), dist[idx], cb.entry_id(idx)});
  }
  return result;
}

RetrievalResult purge_duplicates(const RetrievalResult& r) {
  RetrievalResult out;
  out.query_id = r.query_id;
  std::unordered_set<std::uint64_t> seen;
  for (const auto& item : r.items) {
    if (seen.insert(item.video_id).second) out.items.push_back(item);
  }
  return out;
}

namespace {
std::atomic<std::uint64_t> g_next_session{1};
}

StreamSession::StreamSession(const EncoderModel& model)
    : model_(&model), state_(make_state(model)), session_id_(g_next_session.fetch_add(1)) {}

Bitcode StreamSession::push(const double* clip, std::size_t dim) {
  return encode_step(*model_, state_, clip, dim);
}

Bitcode StreamSession::current_code() const {
  if (state_.steps == 0) {
    throw StateError("stream session " + std::to_string(session_id_) +
                     ": query before the first clip was pushed");
  }
  return Bitcode::from_signs(state_.h2.row(0), state_.h2.cols());
}

RetrievalResult StreamSession::query(const Codebook& cb, std::size_t k) const {
  RetrievalResult r = search(cb, current_code(), k);
  r.query_id = session_id_;
  return r;
}

Codebook random_codebook(std::size_t n_entries, std::uint32_t n_bits, std::uint64_t seed) {
  Codebook cb(n_bits);
  Rng rng(seed, "random-codebook");
  for (std::size_t i = 0; i < n_entries; ++i) {
    Bitcode code(n_bits);
    for (std::uint32_t b = 0; b < n_bits; ++b) {
      code.set_bit(b, (rng.next_u64() & 1ull) != 0);
    }
    cb.add(i, 1.0f, code);
  }
  return cb;
}

BenchReport bench_search(const Codebook& cb, std::size_t n_queries, std::size_t k,
                         std::uint64_t seed) {
  if (cb.size() == 0) throw ConfigError("bench_search: empty codebook");
  if (n_queries == 0) throw ConfigError("bench_search: need at least one query");
  Rng rng(seed, "bench-queries");
  std::vector<Bitcode> queries;
  queries.reserve(n_queries);
  for (std::size_t q = 0; q < n_queries; ++q) {
    Bitcode code(cb.n_bits());
    for (std::uint32_t b = 0; b < cb.n_bits(); ++b) {
      code.set_bit(b, (rng.next_u64() & 1ull) != 0);
    }
    queries.push_back(std::move(code));
  }

  using clock = std::chrono::steady_clock;
  std::vector<double> micros(n_queries);
  SearchStats stats;
  // Warm-up pass touches the codebook once before timing.
  (void)search(cb, queries[0], k);
  for (std::size_t q = 0; q < n_queries; ++q) {
    const auto t0 = clock::now();
    const auto r = search(cb, queries[q], k, &stats);
    const auto t1 = clock::now();
    (void)r;
    micros[q] = std::chrono::duration<double, std::micro>(t1 - t0).count();
  }

  std::vector<double> sorted = micros;
  std::sort(sorted.begin(), sorted.end());
  BenchReport report;
  report.n_entries = cb.size();
  report.n_bits = cb.n_bits();
  report.n_queries = n_queries;
  report.k = k;
  report.median_us = sorted[sorted.size() / 2];
  report.p99_us = sorted[std::min(sorted.size() - 1,
                                  static_cast<std::size_t>(
                                      std::ceil(0.99 * static_cast<double>(sorted.size())) - 1))];
  double sum = 0.0;
  for (double m : micros) sum += m;
  report.mean_us = sum / static_cast<double>(n_queries);
  report.distance_evals_per_query = stats.distance_evals / n_queries;
  return report;
}

}  // namespace msh
