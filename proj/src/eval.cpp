#include "msh/eval.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "msh/kernels.hpp"

#include "msh/log.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace msh {

double ap_at_k(const std::vector<char>& relevance, std::size_t k) {
  if (k == 0) throw ConfigError("ap_at_k: k must be >= 1");
  double sum = 0.0;
  std::size_t n_correct = 0;
  for (std::size_t j = 1; j <= k; ++j) {
    if (j <= relevance.size() && relevance[j - 1]) ++n_correct;
    sum += static_cast<double>(n_correct) / static_cast<double>(j);
  }
  return sum / static_cast<double>(k);
}

double map_at_k(const std::vector<std::vector<char>>& relevance_lists, std::size_t k) {
  if (relevance_lists.empty()) throw ConfigError("map_at_k: empty query set");
  double sum = 0.0;
  for (const auto& rel : relevance_lists) sum += ap_at_k(rel, k);
  return sum / static_cast<double>(relevance_lists.size());
}

EvalReport sweep(const MethodBundle& bundle, const std::vector<FeatureSequence>& queries,
                 const std::unordered_map<std::uint64_t, std::uint32_t>& codebook_classes,
                 const std::vector<double>& alphas, int k) {
  if (bundle.query_encoder == nullptr || bundle.codebook == nullptr) {
    throw ConfigError("sweep: method bundle is missing the encoder or the codebook");
  }
  if (queries.empty()) throw ConfigError("sweep: empty query set");
  if (k < 1) throw ConfigError("sweep: k must be >= 1");

  // Classes actually present in the codebook, for the skip rule.
  std::unordered_map<std::uint32_t, std::size_t> class_counts;
  for (const auto& [vid, cls] : codebook_classes) ++class_counts[cls];

  std::vector<std::size_t> usable;
  for (std::size_t q = 0; q < queries.size(); ++q) {
    const auto it = class_counts.find(queries[q].class_id);
    if (it == class_counts.end() || it->second == 0) {
      log::warn("sweep: query video " + std::to_string(queries[q].video_id) + " (class " +
                std::to_string(queries[q].class_id) +
                ") has no codebook entries of its class; skipping");
      continue;
    }
    usable.push_back(q);
  }
  if (usable.empty()) throw ConfigError("sweep: no query has a class present in the codebook");

  const std::size_t deep_k =
      bundle.purge ? static_cast<std::size_t>(k) * std::max<std::size_t>(1, bundle.codebook->n_alphas())
                   : static_cast<std::size_t>(k);

  EvalReport report;
  for (double alpha : alphas) {
    std::vector<double> ap(usable.size(), 0.0);
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic) if (kernels::parallel_enabled())
#endif
    for (std::int64_t u = 0; u < static_cast<std::int64_t>(usable.size()); ++u) {
      const FeatureSequence& query = queries[usable[u]];
      const Matrix prefix = clip_prefix(query.clips, alpha);
      const Bitcode code = encode_sequence(*bundle.query_encoder, prefix).final;
      RetrievalResult r = search(*bundle.codebook, code, deep_k);
      if (bundle.purge) {
        r = purge_duplicates(r);
        if (r.items.size() > static_cast<std::size_t>(k)) r.items.resize(k);
      }
      std::vector<char> rel(r.items.size());
      for (std::size_t j = 0; j < r.items.size(); ++j) {
        const auto it = codebook_classes.find(r.items[j].video_id);
        rel[j] = (it != codebook_classes.end() && it->second == query.class_id) ? 1 : 0;
      }
      ap[u] = ap_at_k(rel, k);
    }
    double sum = 0.0;
    for (double a : ap) sum += a;
    report.rows.push_back(EvalRow{bundle.name, bundle.query_encoder->n_bits, alpha, k,
                                  sum / static_cast<double>(ap.size())});
  }
  return report;
}

namespace {
bool close(double a, double b) { return std::fabs(a - b) < 1e-6; }
}  // namespace

RangeAverages aggregate(const EvalReport& report, const std::string& method, int n_bits) {
  double by_level[10];
  bool present[10] = {false};
  for (const auto& row : report.rows) {
    if (row.method != method || row.n_bits != n_bits) continue;
    for (int i = 0; i < 10; ++i) {
      if (close(row.alpha, (i + 1) / 10.0)) {
        by_level[i] = row.map;
        present[i] = true;
      }
    }
  }
  for (int i = 0; i < 10; ++i) {
    if (!present[i]) {
      throw ConfigError("aggregate: missing alpha level " + std::to_string((i + 1) / 10.0) +
                        " for method " + method);
    }
  }
  RangeAverages out;
  out.very_early = (by_level[0] + by_level[1]) / 2.0;
  for (int i = 0; i < 5; ++i) out.early += by_level[i] / 5.0;
  for (int i = 0; i < 10; ++i) out.overall += by_level[i] / 10.0;
  return out;
}

namespace {

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

double parse_double(const std::string& s, const char* what) {
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw FormatError(std::string("bad number in report ") + what + ": " + s);
  }
  return v;
}

}  // namespace

void write_report_csv(const EvalReport& report, const std::string& path) {
  if (report.rows.empty()) throw ConfigError("write_report_csv: empty report");
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw IoError("cannot open report for writing: " + path);
  os << "method,n_bits,alpha,k,map\n";
  for (const auto& row : report.rows) {
    os << row.method << ',' << row.n_bits << ',' << format_double(row.alpha) << ','
       << row.k << ',' << format_double(row.map) << '\n';
  }
  if (!os) throw IoError("failed writing report: " + path);
}

EvalReport read_report_csv(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open report: " + path);
  std::string line;
  if (!std::getline(is, line) || line != "method,n_bits,alpha,k,map") {
    throw FormatError("report is missing the expected CSV header");
  }
  EvalReport report;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string method, n_bits, alpha, k, map;
    if (!std::getline(ls, method, ',') || !std::getline(ls, n_bits, ',') ||
        !std::getline(ls, alpha, ',') || !std::getline(ls, k, ',') ||
        !std::getline(ls, map)) {
      throw FormatError("malformed report line: " + line);
    }
    EvalRow row;
    row.method = method;
    row.n_bits = static_cast<int>(parse_double(n_bits, "n_bits"));
    row.alpha = parse_double(alpha, "alpha");
    row.k = static_cast<int>(parse_double(k, "k"));
    row.map = parse_double(map, "map");
    report.rows.push_back(std::move(row));
  }
  return report;
}

void write_report_json(const EvalReport& report, const std::string& path) {
  if (report.rows.empty()) throw ConfigError("write_report_json: empty report");
  nlohmann::json j;
  j["metadata"] = {{"seed", report.seed},
                   {"dataset_id", report.dataset_id},
                   {"timestamp", report.timestamp}};
  j["rows"] = nlohmann::json::array();
  for (const auto& row : report.rows) {
    j["rows"].push_back({{"method", row.method},
                         {"n_bits", row.n_bits},
                         {"alpha", row.alpha},
                         {"k", row.k},
                         {"map", row.map}});
  }
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw IoError("cannot open report for writing: " + path);
  os << j.dump(2) << '\n';
  if (!os) throw IoError("failed writing report: " + path);
}

EvalReport read_report_json(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open report: " + path);
  nlohmann::json j;
  try {
    is >> j;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("bad JSON report: ") + e.what());
  }
  EvalReport report;
  try {
    report.seed = j.at("metadata").at("seed").get<std::uint64_t>();
    report.dataset_id = j.at("metadata").at("dataset_id").get<std::string>();
    report.timestamp = j.at("metadata").at("timestamp").get<std::string>();
    for (const auto& row : j.at("rows")) {
      report.rows.push_back(EvalRow{row.at("method").get<std::string>(),
                                    row.at("n_bits").get<int>(), row.at("alpha").get<double>(),
                                    row.at("k").get<int>(), row.at("map").get<double>()});
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("JSON report is missing fields: ") + e.what());
  }
  return report;
}

}  // namespace msh
