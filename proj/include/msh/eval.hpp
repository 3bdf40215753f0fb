// Retrieval-quality evaluation: AP@K and mAP@K, the observation-level sweep,
// the very-early/early/overall aggregation and report emission (CSV/JSON).
#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "msh/data.hpp"
#include "msh/encoder.hpp"
#include "msh/index.hpp"

namespace msh {

// AP@K = (1/K) * sum_{j=1..K} N_correct(j) / j, where N_correct(j) counts
// matching results among the top j. Lists shorter than K count the missing
// tail as non-matching.
double ap_at_k(const std::vector<char>& relevance, std::size_t k);

double map_at_k(const std::vector<std::vector<char>>& relevance_lists, std::size_t k);

struct EvalRow {
  std::string method;
  int n_bits = 0;
  double alpha = 1.0;
  int k = 0;
  double map = 0.0;
};

struct EvalReport {
  std::vector<EvalRow> rows;
  std::uint64_t seed = 0;
  std::string dataset_id;
  std::string timestamp;  // informational; not part of the CSV schema
};

// One evaluated configuration: which encoder answers queries and which
// codebook is searched. purge enables duplicate removal for codebooks with
// truncated duplicates (searched k * n_alpha deep first).
struct MethodBundle {
  std::string name;
  const EncoderModel* query_encoder = nullptr;
  const Codebook* codebook = nullptr;
  bool purge = false;
};

// Truncates every query at each observation level, encodes it with the
// bundle's query encoder, searches and scores mAP@K against class labels.
// Queries whose class is absent from the codebook are skipped with a warning.
EvalReport sweep(const MethodBundle& bundle, const std::vector<FeatureSequence>& queries,
                 const std::unordered_map<std::uint64_t, std::uint32_t>& codebook_classes,
                 const std::vector<double>& alphas, int k);

struct RangeAverages {
  double very_early = 0.0;  // mean over alpha in {0.1, 0.2}
  double early = 0.0;       // mean over alpha in {0.1 .. 0.5}
  double overall = 0.0;     // mean over all ten levels
};

// Requires the full ten-level grid 0.1 .. 1.0 for (method, n_bits).
RangeAverages aggregate(const EvalReport& report, const std::string& method, int n_bits);

// CSV schema: method,n_bits,alpha,k,map with shortest-round-trip numbers.
void write_report_csv(const EvalReport& report, const std::string& path);
EvalReport read_report_csv(const std::string& path);

// JSON mirror with a metadata envelope (seed, dataset id, timestamp).
void write_report_json(const EvalReport& report, const std::string& path);
EvalReport read_report_json(const std::string& path);

}  // namespace msh
