#include "msh/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "msh/log.hpp"
#include "msh/rng.hpp"

namespace msh {

Regime parse_regime(const std::string& name) {
  if (name == "ssth-rt") return Regime::kSsthRt;
  if (name == "ssth-rt+") return Regime::kSsthRtPlus;
  if (name == "ssth-rt++") return Regime::kSsthRtPlusPlus;
  if (name == "la-reco") return Regime::kLaReco;
  if (name == "la-code") return Regime::kLaCode;
  throw ConfigError("unknown regime: " + name +
                    " (expected ssth-rt, ssth-rt+, ssth-rt++, la-reco or la-code)");
}

const char* regime_name(Regime r) {
  switch (r) {
    case Regime::kSsthRt: return "ssth-rt";
    case Regime::kSsthRtPlus: return "ssth-rt+";
    case Regime::kSsthRtPlusPlus: return "ssth-rt++";
    case Regime::kLaReco: return "la-reco";
    case Regime::kLaCode: return "la-code";
  }
  return "?";
}

bool is_secondary_regime(Regime r) {
  return r == Regime::kLaReco || r == Regime::kLaCode;
}

TrainingConfig TrainingConfig::defaults_for(Regime r) {
  TrainingConfig c;
  c.regime = r;
  if (is_secondary_regime(r)) {
    c.epochs = 15;
    c.learning_rate = 5e-4;
  }
  return c;
}

void TrainingConfig::validate() const {
  if (n_bits < 1) throw ConfigError("n_bits must be >= 1");
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (learning_rate < 0) throw ConfigError("learning_rate must be >= 0");
  if (bucket_width < 1) throw ConfigError("bucket_width must be >= 1");
  if (alpha_grid.empty()) throw ConfigError("alpha grid must not be empty");
  for (double a : alpha_grid) {
    if (!(a > 0.0) || a > 1.0) throw ConfigError("alpha grid values must lie in (0, 1]");
  }
  if (momentum < 0.0 || momentum >= 1.0) throw ConfigError("momentum must lie in [0, 1)");
}

TrainingConfig load_training_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open config file: " + path);

  std::vector<std::pair<std::string, std::string>> kv;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    std::istringstream ls(line);
    std::string key, eq, value;
    if (!(ls >> key)) continue;  // blank
    if (!(ls >> eq >> value) || eq != "=") {
      throw FormatError("config line " + std::to_string(lineno) + ": expected 'key = value'");
    }
    kv.emplace_back(key, value);
  }

  // The regime selects the defaults (epochs, learning rate); every other key
  // then overrides them.
  TrainingConfig c;
  for (const auto& [key, value] : kv) {
    if (key == "regime") c = TrainingConfig::defaults_for(parse_regime(value));
  }
  for (const auto& [key, value] : kv) {
    try {
      if (key == "regime") {
        continue;
      } else if (key == "n_bits") {
        c.n_bits = std::stoi(value);
      } else if (key == "epochs") {
        c.epochs = std::stoi(value);
      } else if (key == "learning_rate") {
        c.learning_rate = std::stod(value);
      } else if (key == "batch_size") {
        c.batch_size = std::stoi(value);
      } else if (key == "seed") {
        c.seed = std::stoull(value);
      } else if (key == "bucket_width") {
        c.bucket_width = std::stoi(value);
      } else if (key == "grad_clip") {
        c.grad_clip = std::stod(value);
      } else if (key == "momentum") {
        c.momentum = std::stod(value);
      } else if (key == "alpha_grid") {
        c.alpha_grid.clear();
        std::istringstream vs(value);
        std::string tok;
        while (std::getline(vs, tok, ',')) c.alpha_grid.push_back(std::stod(tok));
      } else {
        throw ConfigError("unknown config key: " + key);
      }
    } catch (const std::invalid_argument&) {
      throw FormatError("bad value for config key " + key);
    }
  }
  c.validate();
  return c;
}

FeatureSequence truncate(const FeatureSequence& seq, double alpha) {
  FeatureSequence out = seq;
  out.clips = clip_prefix(seq.clips, alpha);
  return out;
}

std::vector<Batch> make_batches(const std::vector<FeatureSequence>& dataset, int batch_size,
                                std::uint64_t seed, int bucket_width) {
  if (dataset.empty()) throw ConfigError("make_batches: empty dataset");
  if (batch_size < 1 || bucket_width < 1) throw ConfigError("make_batches: bad sizes");

  std::map<std::size_t, std::vector<std::size_t>> buckets;  // ordered for determinism
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    if (dataset[i].length() == 0) throw ShapeError("make_batches: empty sequence in dataset");
    if (dataset[i].dim() != dataset[0].dim()) {
      throw ShapeError("make_batches: mixed feature dimensions in dataset");
    }
    buckets[(dataset[i].length() - 1) / bucket_width].push_back(i);
  }

  std::vector<Batch> batches;
  for (auto& [bucket_id, members] : buckets) {
    Rng rng(hash_combine(hash_label(seed, "bucket"), bucket_id));
    rng.shuffle(members);
    for (std::size_t start = 0; start < members.size(); start += batch_size) {
      Batch b;
      const std::size_t end = std::min(members.size(), start + batch_size);
      b.trimmed_len = SIZE_MAX;
      for (std::size_t i = start; i < end; ++i) {
        b.items.push_back(members[i]);
        b.trimmed_len = std::min(b.trimmed_len, dataset[members[i]].length());
      }
      batches.push_back(std::move(b));
    }
  }
  Rng order_rng(hash_label(seed, "batch-order"));
  order_rng.shuffle(batches);
  return batches;
}

double loss_reconstruction(const Matrix& target, const Matrix& fwd, const Matrix& rev) {
  if (!target.same_shape(fwd) || !target.same_shape(rev)) {
    throw ShapeError("loss_reconstruction: length or dimension mismatch");
  }
  const std::size_t t_steps = target.rows();
  double total = 0.0;
  for (std::size_t t = 0; t < t_steps; ++t) {
    double sq_f = 0.0, sq_r = 0.0;
    for (std::size_t c = 0; c < target.cols(); ++c) {
      const double df = target(t, c) - fwd(t, c);
      const double dr = target(t_steps - 1 - t, c) - rev(t, c);
      sq_f += df * df;
      sq_r += dr * dr;
    }
    total += std::sqrt(sq_f) + std::sqrt(sq_r);
  }
  return total;
}

double loss_la_code(const std::vector<double>& beta, const Bitcode& target) {
  if (beta.size() != target.n_bits()) {
    throw ShapeError("loss_la_code: prebitcode width does not match target");
  }
  double sq = 0.0;
  for (std::size_t i = 0; i < beta.size(); ++i) {
    const double d = beta[i] - (target.bit(i) ? 1.0 : -1.0);
    sq += d * d;
  }
  return std::sqrt(sq);
}

// ---- shared batch plumbing -------------------------------------------------

namespace {

// Per-timestep input matrices for the batch prefix [0, t_eff).
std::vector<Matrix> gather_steps(const std::vector<FeatureSequence>& ds, const Batch& batch,
                                 std::size_t t_eff) {
  const std::size_t b = batch.items.size();
  const std::size_t n_f = ds[batch.items[0]].dim();
  std::vector<Matrix> steps(t_eff);
  for (std::size_t t = 0; t < t_eff; ++t) {
    steps[t].resize(b, n_f);
    for (std::size_t r = 0; r < b; ++r) {
      const Matrix& clips = ds[batch.items[r]].clips;
      for (std::size_t c = 0; c < n_f; ++c) steps[t](r, c) = clips(t, c);
    }
  }
  return steps;
}

// Squared-error training objective over a decoded batch; fills d_fwd/d_rev
// (assumed zeroed). The reverse branch is scored against the reversed target.
double batch_reconstruction_objective(const std::vector<Matrix>& targets,
                                      const DecoderTape& tape, std::vector<Matrix>& d_fwd,
                                      std::vector<Matrix>& d_rev) {
  const std::size_t t_steps = targets.size();
  double loss = 0.0;
  for (std::size_t t = 0; t < t_steps; ++t) {
    loss += l2_squared_loss_rows(tape.fwd_frames()[t], targets[t], &d_fwd[t]);
    loss += l2_squared_loss_rows(tape.rev_frames()[t], targets[t_steps - 1 - t], &d_rev[t]);
  }
  return loss;
}

void write_metrics(const std::string& path, const std::vector<double>& epoch_loss) {
  if (path.empty()) return;
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw IoError("cannot open metrics file for writing: " + path);
  os << "epoch,loss\n";
  for (std::size_t e = 0; e < epoch_loss.size(); ++e) {
    os << (e + 1) << ',' << epoch_loss[e] << '\n';
  }
}

std::size_t truncated_len(std::size_t t, double alpha) {
  auto keep = static_cast<std::size_t>(std::floor(alpha * static_cast<double>(t)));
  return std::max<std::size_t>(1, std::min(keep, t));
}

// Velocity buffers for classical momentum, mirroring the gradient views.
class MomentumBuffers {
 public:
  explicit MomentumBuffers(const std::vector<SpanView>& grads) {
    for (const auto& g : grads) store_.emplace_back(g.n, 0.0);
  }

  // velocity <- momentum * velocity + grads
  std::vector<SpanView> update(const std::vector<SpanView>& grads, double momentum) {
    std::vector<SpanView> out;
    out.reserve(grads.size());
    for (std::size_t k = 0; k < grads.size(); ++k) {
      auto& v = store_[k];
      for (std::size_t i = 0; i < v.size(); ++i) {
        v[i] = momentum * v[i] + grads[k].data[i];
      }
      out.push_back(SpanView{v.data(), v.size(), grads[k].name});
    }
    return out;
  }

 private:
  std::vector<std::vector<double>> store_;
};

}  // namespace

TrainResult train_primary(const TrainingConfig& config,
                          const std::vector<FeatureSequence>& dataset,
                          const std::string& metrics_csv) {
  config.validate();
  if (config.regime != Regime::kSsthRt && config.regime != Regime::kSsthRtPlus &&
      config.regime != Regime::kSsthRtPlusPlus) {
    throw ConfigError(std::string("train_primary: regime ") + regime_name(config.regime) +
                      " is not a primary regime");
  }
  if (dataset.empty()) throw ConfigError("train_primary: empty dataset");
  const int n_f = static_cast<int>(dataset[0].dim());
  // ++ trains exactly like +; the difference is codebook construction.
  const bool augment = config.regime != Regime::kSsthRt;

  TrainResult result;
  result.encoder.init(config.n_bits, n_f, hash_label(config.seed, "primary-encoder"));
  result.decoders.init(config.n_bits, n_f, hash_label(config.seed, "primary-decoder"));

  EncoderGrads enc_grads;
  DecoderGrads dec_grads;
  enc_grads.init_like(result.encoder);
  dec_grads.init_like(result.decoders);

  auto params = result.encoder.param_views();
  {
    auto dec_params = result.decoders.param_views();
    params.insert(params.end(), dec_params.begin(), dec_params.end());
  }
  MomentumBuffers velocity(params);

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const auto batches = make_batches(
        dataset, config.batch_size,
        hash_combine(hash_label(config.seed, "batches"), static_cast<std::uint64_t>(epoch)),
        config.bucket_width);
    Rng alpha_rng(
        hash_combine(hash_label(config.seed, "alpha"), static_cast<std::uint64_t>(epoch)));

    double epoch_total = 0.0;
    std::size_t epoch_videos = 0;
    for (std::size_t bi = 0; bi < batches.size(); ++bi) {
      const Batch& batch = batches[bi];
      std::size_t t_eff = batch.trimmed_len;
      if (augment && bi % 2 == 1) {
        const double alpha =
            config.alpha_grid[alpha_rng.below(config.alpha_grid.size())];
        t_eff = truncated_len(batch.trimmed_len, alpha);
      }
      const auto steps = gather_steps(dataset, batch, t_eff);

      EncoderTape enc_tape;
      enc_tape.forward(result.encoder, steps, BnMode::kTrain, Binarize::kSign,
                       &result.encoder.bn);

      DecoderTape dec_tape;
      dec_tape.forward(result.decoders, enc_tape.bitcode(), t_eff);

      std::vector<Matrix> d_fwd(t_eff), d_rev(t_eff);
      for (std::size_t t = 0; t < t_eff; ++t) {
        d_fwd[t].resize(batch.items.size(), n_f, 0.0);
        d_rev[t].resize(batch.items.size(), n_f, 0.0);
      }
      const double loss = batch_reconstruction_objective(steps, dec_tape, d_fwd, d_rev);
      epoch_total += loss;
      epoch_videos += batch.items.size();

      enc_grads.zero();
      dec_grads.zero();
      Matrix d_code(batch.items.size(), config.n_bits, 0.0);
      dec_tape.backward(result.decoders, d_fwd, d_rev, dec_grads, d_code);
      Matrix no_beta;
      enc_tape.backward(result.encoder, d_code, no_beta, enc_grads);

      auto grads = enc_grads.grad_views();
      {
        auto dg = dec_grads.grad_views();
        grads.insert(grads.end(), dg.begin(), dg.end());
      }
      clip_global_norm(grads, config.grad_clip);
      const auto step = velocity.update(grads, config.momentum);
      sgd_step(params, step, config.learning_rate);
    }
    result.epoch_loss.push_back(epoch_total / static_cast<double>(epoch_videos));
    log::info("epoch " + std::to_string(epoch + 1) + "/" + std::to_string(config.epochs) +
              " loss " + std::to_string(result.epoch_loss.back()));
  }
  write_metrics(metrics_csv, result.epoch_loss);
  return result;
}

DistillResult train_secondary(Regime regime, const EncoderModel& primary,
                              const DecoderModel* decoders, const TrainingConfig& config,
                              const std::vector<FeatureSequence>& dataset,
                              const std::string& metrics_csv) {
  config.validate();
  if (!is_secondary_regime(regime)) {
    throw ConfigError(std::string("train_secondary: regime ") + regime_name(regime) +
                      " is not a distillation regime");
  }
  if (regime == Regime::kLaReco && decoders == nullptr) {
    throw ConfigError("la-reco needs the primary's trained decoder");
  }
  if (dataset.empty()) throw ConfigError("train_secondary: empty dataset");
  if (primary.n_bits != config.n_bits) {
    throw ConfigError("train_secondary: config n_bits does not match the primary encoder");
  }

  DistillResult result;
  result.encoder = primary;  // initialized from the primary's weights and stats

  // Full-video target bitcodes come from the frozen primary in inference mode.
  std::vector<Bitcode> targets;
  if (regime == Regime::kLaCode) {
    targets.resize(dataset.size());
    for (std::size_t i = 0; i < dataset.size(); ++i) {
      targets[i] = encode_sequence(primary, dataset[i].clips).final;
    }
  }

  EncoderGrads enc_grads;
  enc_grads.init_like(result.encoder);
  DecoderGrads dec_scratch;  // decoder stays frozen; gradients are discarded
  if (decoders != nullptr) dec_scratch.init_like(*decoders);

  auto params = result.encoder.param_views();
  MomentumBuffers velocity(params);

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const auto batches = make_batches(
        dataset, config.batch_size,
        hash_combine(hash_label(config.seed, "batches"), static_cast<std::uint64_t>(epoch)),
        config.bucket_width);
    Rng alpha_rng(
        hash_combine(hash_label(config.seed, "alpha"), static_cast<std::uint64_t>(epoch)));

    double epoch_total = 0.0;
    std::size_t epoch_videos = 0;
    for (const Batch& batch : batches) {
      const double alpha = config.alpha_grid[alpha_rng.below(config.alpha_grid.size())];
      const std::size_t t_full = batch.trimmed_len;
      const std::size_t t_q = truncated_len(t_full, alpha);
      const auto steps_q = gather_steps(dataset, batch, t_q);

      // Distillation keeps the normalization statistics frozen at the
      // primary's values; they are what codebook and query encoding use.
      EncoderTape enc_tape;
      enc_tape.forward(result.encoder, steps_q, BnMode::kInference, Binarize::kSign,
                       nullptr);

      enc_grads.zero();
      double loss = 0.0;
      if (regime == Regime::kLaCode) {
        const Matrix& beta = enc_tape.prebitcode();
        Matrix target(batch.items.size(), config.n_bits);
        for (std::size_t r = 0; r < batch.items.size(); ++r) {
          const Bitcode& code = targets[batch.items[r]];
          for (int j = 0; j < config.n_bits; ++j) {
            target(r, j) = code.bit(j) ? 1.0 : -1.0;
          }
        }
        Matrix d_beta(batch.items.size(), config.n_bits, 0.0);
        loss = l2_squared_loss_rows(beta, target, &d_beta);
        Matrix no_code;
        enc_tape.backward(result.encoder, no_code, d_beta, enc_grads);
      } else {
        const auto steps_full = gather_steps(dataset, batch, t_full);
        DecoderTape dec_tape;
        dec_tape.forward(*decoders, enc_tape.bitcode(), t_full);
        std::vector<Matrix> d_fwd(t_full), d_rev(t_full);
        for (std::size_t t = 0; t < t_full; ++t) {
          d_fwd[t].resize(batch.items.size(), primary.n_f, 0.0);
          d_rev[t].resize(batch.items.size(), primary.n_f, 0.0);
        }
        loss = batch_reconstruction_objective(steps_full, dec_tape, d_fwd, d_rev);
        dec_scratch.zero();
        Matrix d_code(batch.items.size(), config.n_bits, 0.0);
        dec_tape.backward(*decoders, d_fwd, d_rev, dec_scratch, d_code);
        Matrix no_beta;
        enc_tape.backward(result.encoder, d_code, no_beta, enc_grads);
      }
      epoch_total += loss;
      epoch_videos += batch.items.size();

      auto grads = enc_grads.grad_views();
      clip_global_norm(grads, config.grad_clip);
      const auto step = velocity.update(grads, config.momentum);
      sgd_step(params, step, config.learning_rate);
    }
    result.epoch_loss.push_back(epoch_total / static_cast<double>(epoch_videos));
    log::info("distill epoch " + std::to_string(epoch + 1) + "/" +
              std::to_string(config.epochs) + " loss " +
              std::to_string(result.epoch_loss.back()));
  }
  write_metrics(metrics_csv, result.epoch_loss);
  return result;
}

}  // namespace msh
