// Bit-packed codebook, Hamming top-K search over it, duplicate purging for
// the truncation-augmented codebook, streaming query sessions and search
// throughput measurement.
//
// Codebook file (little-endian): magic "MSHC", u32 version, u32 n_bits,
// u64 entry count, then per entry u64 entry id, u64 source video id,
// f32 alpha tag, and the packed code words.
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "msh/bitcode.hpp"
#include "msh/data.hpp"
#include "msh/encoder.hpp"

namespace msh {

std::uint32_t hamming(const Bitcode& a, const Bitcode& b);

class Codebook {
 public:
  Codebook() = default;
  explicit Codebook(std::uint32_t n_bits);

  // entry_id is assigned sequentially; insertion order is query tie order.
  std::uint64_t add(std::uint64_t video_id, float alpha, const Bitcode& code);

  std::uint32_t n_bits() const { return n_bits_; }
  std::size_t size() const { return video_ids_.size(); }
  std::size_t words_per_code() const { return words_per_code_; }
  const std::uint64_t* flat_words() const { return words_.data(); }

  std::uint64_t entry_id(std::size_t i) const { return entry_ids_[i]; }
  std::uint64_t video_id(std::size_t i) const { return video_ids_[i]; }
  float alpha(std::size_t i) const { return alphas_[i]; }
  Bitcode code(std::size_t i) const;

  // Distinct alpha tags present (1 for a plain codebook).
  std::size_t n_alphas() const;

  void save(const std::string& path) const;
  static Codebook load(const std::string& path);

 private:
  std::uint32_t n_bits_ = 0;
  std::size_t words_per_code_ = 0;
  std::vector<std::uint64_t> entry_ids_;
  std::vector<std::uint64_t> video_ids_;
  std::vector<float> alphas_;
  std::vector<std::uint64_t> words_;  // entry-major
};

enum class CodebookMode { kPlain, kDuplicated };

// Plain: one full-video code per database video. Duplicated: one code per
// (video, alpha) over the grid, so the entry count is n_alpha times larger.
Codebook build_codebook(const EncoderModel& encoder,
                        const std::vector<FeatureSequence>& database, CodebookMode mode,
                        const std::vector<double>& alpha_grid = {});

struct ResultItem {
  std::uint64_t video_id = 0;
  float alpha = 1.0f;
  std::uint32_t distance = 0;
  std::uint64_t entry_id = 0;
};

struct RetrievalResult {
  std::uint64_t query_id = 0;
  std::vector<ResultItem> items;  // distance ascending, ties by entry id
};

struct SearchStats {
  std::size_t distance_evals = 0;
};

// Linear scan plus bounded top-k selection; ties break toward the smaller
// entry id. k is clamped to the codebook size.
RetrievalResult search(const Codebook& cb, const Bitcode& query, std::size_t k,
                       SearchStats* stats = nullptr);

// Keeps the best-ranked entry per source video, preserving order. Only
// duplicated codebooks need this; it is idempotent.
RetrievalResult purge_duplicates(const RetrievalResult& r);

// A stream session owns the recurrent state for one growing video. Pushes
// advance it one clip at a time; queries read the current bitcode without
// consuming anything.
class StreamSession {
 public:
  explicit StreamSession(const EncoderModel& model);

  Bitcode push(const double* clip, std::size_t dim);
  Bitcode push(const std::vector<double>& clip) { return push(clip.data(), clip.size()); }

  RetrievalResult query(const Codebook& cb, std::size_t k) const;

  Bitcode current_code() const;
  std::uint64_t session_id() const { return session_id_; }
  std::uint32_t clips_consumed() const { return state_.steps; }

 private:
  const EncoderModel* model_;
  EncoderState state_;
  std::uint64_t session_id_;
};

struct BenchReport {
  std::size_t n_entries = 0;
  std::uint32_t n_bits = 0;
  std::size_t n_queries = 0;
  std::size_t k = 0;
  double median_us = 0.0;
  double p99_us = 0.0;
  double mean_us = 0.0;
  std::size_t distance_evals_per_query = 0;
};

// Times hash ranking (distance scan + top-k selection) over the codebook
// with random query codes.
BenchReport bench_search(const Codebook& cb, std::size_t n_queries, std::size_t k,
                         std::uint64_t seed = 1);

// Random codebook of a given size, for benchmarks and scaling tests.
Codebook random_codebook(std::size_t n_entries, std::uint32_t n_bits, std::uint64_t seed);

}  // namespace msh
