// Training regimes for the binary autoencoder and the look-ahead distilled
// encoders, with length-bucketed batching and truncation augmentation.
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "msh/bitcode.hpp"
#include "msh/data.hpp"
#include "msh/encoder.hpp"

namespace msh {

enum class Regime { kSsthRt, kSsthRtPlus, kSsthRtPlusPlus, kLaReco, kLaCode };

Regime parse_regime(const std::string& name);
const char* regime_name(Regime r);
bool is_secondary_regime(Regime r);

struct TrainingConfig {
  Regime regime = Regime::kSsthRt;
  int n_bits = 32;
  int epochs = 60;
  double learning_rate = 5e-3;
  int batch_size = 40;
  std::vector<double> alpha_grid = {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0};
  std::uint64_t seed = 0;
  int bucket_width = 8;  // clips per length bucket
  double grad_clip = 5.0;
  double momentum = 0.9;  // classical momentum on the clipped gradient

  // Primary: 60 epochs at 5e-3; secondary: 15 epochs at 5e-4.
  static TrainingConfig defaults_for(Regime r);
  void validate() const;
};

// Key = value text file; '#' starts a comment. Unknown keys are rejected.
TrainingConfig load_training_config(const std::string& path);

// max(1, floor(alpha * T)) leading clips.
FeatureSequence truncate(const FeatureSequence& seq, double alpha);

struct Batch {
  std::vector<std::size_t> items;  // indices into the dataset vector
  std::size_t trimmed_len = 0;     // shortest member length
};

// Buckets videos by length (bucket = (len-1)/bucket_width), shuffles within
// buckets, chunks into batches trimmed to their shortest member, and
// shuffles the batch order. Every video appears exactly once.
std::vector<Batch> make_batches(const std::vector<FeatureSequence>& dataset, int batch_size,
                                std::uint64_t seed, int bucket_width);

// Sum over timesteps of ||f_t - fwd_t|| + ||f_(T-1-t) - rev_t||; the reverse
// branch is compared against the time-reversed target.
double loss_reconstruction(const Matrix& target, const Matrix& fwd, const Matrix& rev);

// ||beta - b||, beta real-valued, b in {-1, +1}^n.
double loss_la_code(const std::vector<double>& beta, const Bitcode& target);

struct TrainResult {
  EncoderModel encoder;
  DecoderModel decoders;
  std::vector<double> epoch_loss;  // mean per-video loss
};

// SSTH-RT reconstructs full sequences from full sequences; SSTH-RT+ (and ++,
// which shares its training) alternates full batches with batches truncated
// at a per-batch observation level drawn from the alpha grid.
TrainResult train_primary(const TrainingConfig& config,
                          const std::vector<FeatureSequence>& dataset,
                          const std::string& metrics_csv = "");

struct DistillResult {
  EncoderModel encoder;
  std::vector<double> epoch_loss;
};

// Look-ahead distillation. The secondary starts from the primary's weights;
// per batch an observation level is drawn and only that prefix is seen.
// LA-RECO pushes the secondary's bitcode through the frozen decoder and
// scores the reconstruction against the full sequence; LA-CODE matches the
// secondary's prebitcode to the frozen primary's full-video bitcode.
DistillResult train_secondary(Regime regime, const EncoderModel& primary,
                              const DecoderModel* decoders, const TrainingConfig& config,
                              const std::vector<FeatureSequence>& dataset,
                              const std::string& metrics_csv = "");

}  // namespace msh
