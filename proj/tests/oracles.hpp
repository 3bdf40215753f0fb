// Test-only oracles, kept independent of the library code paths they check:
// a brute-force Hamming count, a full-sort retrieval ranking, an enumeration
// AP, a double-loop reconstruction loss, a scalar LSTM transcription and the
// central finite-difference gradient checker.
#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "msh/bitcode.hpp"
#include "msh/index.hpp"
#include "msh/matrix.hpp"
#include "msh/nn.hpp"

namespace oracles {

// Per-bit loop, no word tricks.
inline std::uint32_t hamming_bit_loop(const msh::Bitcode& a, const msh::Bitcode& b) {
  std::uint32_t d = 0;
  for (std::uint32_t i = 0; i < a.n_bits(); ++i) {
    if (a.bit(i) != b.bit(i)) ++d;
  }
  return d;
}

// Full sort of every entry by (distance, entry id), then cut to k.
inline std::vector<msh::ResultItem> search_full_sort(const msh::Codebook& cb,
                                                     const msh::Bitcode& q, std::size_t k) {
  std::vector<msh::ResultItem> all;
  for (std::size_t i = 0; i < cb.size(); ++i) {
    all.push_back(msh::ResultItem{cb.video_id(i), cb.alpha(i),
                                  hamming_bit_loop(q, cb.code(i)), cb.entry_id(i)});
  }
  std::stable_sort(all.begin(), all.end(), [](const auto& a, const auto& b) {
    return a.distance != b.distance ? a.distance < b.distance : a.entry_id < b.entry_id;
  });
  if (all.size() > k) all.resize(k);
  return all;
}

// Direct enumeration of the AP@K sum.
inline double ap_enumeration(const std::vector<char>& rel, std::size_t k) {
  double sum = 0.0;
  for (std::size_t j = 1; j <= k; ++j) {
    std::size_t n_correct = 0;
    for (std::size_t i = 0; i < j && i < rel.size(); ++i) {
      if (rel[i]) ++n_correct;
    }
    sum += static_cast<double>(n_correct) / static_cast<double>(j);
  }
  return sum / static_cast<double>(k);
}

// Group results by video, keep each video's minimum distance (first entry id
// on ties), then re-rank. Mirrors what purging a ranked list must produce.
inline std::vector<msh::ResultItem> purge_group_by_min(
    const std::vector<msh::ResultItem>& items) {
  std::map<std::uint64_t, msh::ResultItem> best;
  for (const auto& it : items) {
    auto found = best.find(it.video_id);
    if (found == best.end() || it.distance < found->second.distance ||
        (it.distance == found->second.distance && it.entry_id < found->second.entry_id)) {
      best.insert_or_assign(it.video_id, it);
    }
  }
  std::vector<msh::ResultItem> out(items.size() ? 0 : 0);
  for (const auto& [vid, it] : best) out.push_back(it);
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
    return a.distance != b.distance ? a.distance < b.distance : a.entry_id < b.entry_id;
  });
  return out;
}

// Double loop over timesteps and dimensions, written apart from the library.
inline double reconstruction_loss_double_loop(const msh::Matrix& target,
                                              const msh::Matrix& fwd,
                                              const msh::Matrix& rev) {
  const std::size_t t_steps = target.rows();
  double total = 0.0;
  for (std::size_t j = 0; j < t_steps; ++j) {
    double sf = 0.0;
    for (std::size_t c = 0; c < target.cols(); ++c) {
      sf += (target(j, c) - fwd(j, c)) * (target(j, c) - fwd(j, c));
    }
    total += std::sqrt(sf);
  }
  for (std::size_t j = 0; j < t_steps; ++j) {
    double sr = 0.0;
    for (std::size_t c = 0; c < target.cols(); ++c) {
      const double d = target(t_steps - 1 - j, c) - rev(j, c);
      sr += d * d;
    }
    total += std::sqrt(sr);
  }
  return total;
}

// Scalar transcription of the LSTM recurrence for hidden_size = input_size = 1.
struct ScalarLstm {
  // weights: per gate, input weight, recurrent weight, bias
  double wi_x, wi_h, bi;
  double wf_x, wf_h, bf;
  double wg_x, wg_h, bg;
  double wo_x, wo_h, bo;

  static double sig(double z) { return 1.0 / (1.0 + std::exp(-z)); }

  std::pair<double, double> step(double x, double h_prev, double c_prev) const {
    const double i = sig(wi_x * x + wi_h * h_prev + bi);
    const double f = sig(wf_x * x + wf_h * h_prev + bf);
    const double g = std::tanh(wg_x * x + wg_h * h_prev + bg);
    const double o = sig(wo_x * x + wo_h * h_prev + bo);
    const double c = f * c_prev + i * g;
    const double h = o * std::tanh(c);
    return {h, c};
  }
};

struct FdFailure {
  std::string param;
  std::size_t index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
};

struct FdReport {
  std::size_t checked = 0;
  std::vector<FdFailure> failures;
  double max_rel_err = 0.0;
  bool ok() const { return failures.empty(); }
};

// Central finite differences over every coordinate of every view. analytic
// must hold the gradients of loss() at the current parameters. A coordinate
// that misses the tolerance at the primary step is re-verified at step/10:
// truncation error (h^2-scaled, e.g. near small batch variances in the
// normalization) shrinks two decades, a wrong gradient stays wrong.
inline FdReport fd_check(std::vector<msh::SpanView>& params,
                         const std::vector<msh::SpanView>& analytic,
                         const std::function<double()>& loss, double step = 1e-4,
                         double rel_tol = 1e-3, double abs_floor = 1e-5) {
  FdReport report;
  const auto numeric_at = [&](double& p, double h) {
    const double saved = p;
    p = saved + h;
    const double up = loss();
    p = saved - h;
    const double down = loss();
    p = saved;
    return (up - down) / (2.0 * h);
  };
  const auto agrees = [&](double a, double numeric, double* rel_out) {
    const double scale = std::max(std::fabs(a), std::fabs(numeric));
    const double err = std::fabs(a - numeric);
    const double rel = scale > 0 ? err / scale : 0.0;
    if (rel_out != nullptr) *rel_out = err <= abs_floor ? 0.0 : rel;
    return err <= abs_floor || rel <= rel_tol;
  };
  for (std::size_t v = 0; v < params.size(); ++v) {
    for (std::size_t i = 0; i < params[v].n; ++i) {
      double& p = params[v].data[i];
      const double a = analytic[v].data[i];
      double numeric = numeric_at(p, step);
      double rel = 0.0;
      bool ok = agrees(a, numeric, &rel);
      if (!ok) {
        numeric = numeric_at(p, step / 10.0);
        ok = agrees(a, numeric, &rel);
      }
      report.max_rel_err = std::max(report.max_rel_err, rel);
      ++report.checked;
      if (!ok) report.failures.push_back(FdFailure{params[v].name, i, a, numeric});
    }
  }
  return report;
}

}  // namespace oracles
