// msh: predictive incremental video hashing pipeline. Subcommands cover
// dataset generation, primary training, look-ahead distillation, codebook
// construction, one-shot and streaming queries, evaluation sweeps and search
// benchmarking. Set MSH_LOG=info|debug for progress output.
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "msh/data.hpp"
#include "msh/encoder.hpp"
#include "msh/errors.hpp"
#include "msh/eval.hpp"
#include "msh/index.hpp"
#include "msh/log.hpp"
#include "msh/training.hpp"

namespace {

// Exit codes: CLI11 reports its own nonzero codes for usage errors;
// 2 configuration, 3 file i/o or format, 4 shape/state, 5 unexpected.
constexpr int kExitConfig = 2;
constexpr int kExitIo = 3;
constexpr int kExitState = 4;

std::vector<double> parse_csv_doubles(const std::string& text) {
  std::vector<double> out;
  std::string token;
  std::istringstream is(text);
  while (std::getline(is, token, ',')) out.push_back(std::stod(token));
  return out;
}

// "0.1..1.0" (step 0.1) or a comma list like "0.25,0.5,1.0".
std::vector<double> parse_alphas(const std::string& text) {
  std::vector<double> out;
  const auto dots = text.find("..");
  if (dots != std::string::npos) {
    const double lo = std::stod(text.substr(0, dots));
    const double hi = std::stod(text.substr(dots + 2));
    for (double a = lo; a <= hi + 1e-9; a += 0.1) out.push_back(std::round(a * 10.0) / 10.0);
  } else {
    out = parse_csv_doubles(text);
  }
  if (out.empty()) throw msh::ConfigError("no observation levels in: " + text);
  for (double a : out) {
    if (!(a > 0.0) || a > 1.0) {
      throw msh::ConfigError("observation levels must lie in (0, 1]: " + text);
    }
  }
  return out;
}

std::string timestamp_utc() {
  char buf[32];
  const std::time_t now = std::time(nullptr);
  std::tm tm_utc{};
  gmtime_r(&now, &tm_utc);
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm_utc);
  return buf;
}

msh::EncoderModel load_encoder(const std::string& path) {
  return msh::load_model(path).encoder;
}

struct TrainFlags {
  std::string config_path;
  std::string regime;
  int bits = -1;
  int epochs = -1;
  double lr = -1.0;
  int batch = -1;
  int bucket_width = -1;
  std::string alphas;
  std::uint64_t seed = 0;
  bool seed_set = false;
};

msh::TrainingConfig resolve_config(const TrainFlags& f, msh::Regime fallback_regime) {
  msh::TrainingConfig cfg;
  if (!f.config_path.empty()) {
    cfg = msh::load_training_config(f.config_path);
  } else {
    cfg = msh::TrainingConfig::defaults_for(
        f.regime.empty() ? fallback_regime : msh::parse_regime(f.regime));
  }
  if (!f.regime.empty() && !f.config_path.empty()) cfg.regime = msh::parse_regime(f.regime);
  if (f.bits > 0) cfg.n_bits = f.bits;
  if (f.epochs > 0) cfg.epochs = f.epochs;
  if (f.lr >= 0.0) cfg.learning_rate = f.lr;
  if (f.batch > 0) cfg.batch_size = f.batch;
  if (f.bucket_width > 0) cfg.bucket_width = f.bucket_width;
  if (!f.alphas.empty()) cfg.alpha_grid = parse_alphas(f.alphas);
  if (f.seed_set) cfg.seed = f.seed;
  cfg.validate();
  return cfg;
}

void add_train_flags(CLI::App* cmd, TrainFlags& f) {
  cmd->add_option("--config", f.config_path, "key = value config file");
  cmd->add_option("--bits", f.bits, "bitcode size, e.g. 96, 128, 192, 256");
  cmd->add_option("--epochs", f.epochs, "training epochs");
  cmd->add_option("--lr", f.lr, "learning rate");
  cmd->add_option("--batch", f.batch, "batch size");
  cmd->add_option("--bucket-width", f.bucket_width, "length-bucket width in clips");
  cmd->add_option("--alphas", f.alphas, "observation grid, e.g. 0.1..1.0 or 0.2,0.6");
  cmd->add_option("--seed", f.seed, "random seed")->each([&f](const std::string&) {
    f.seed_set = true;
  });
}

int run_cli(int argc, char** argv) {
  CLI::App app{"mid-stream video hashing: train, index, query"};
  app.require_subcommand(1);

  // ---- gen-data -----------------------------------------------------------
  auto* gen = app.add_subcommand("gen-data", "generate a synthetic labeled dataset");
  msh::SyntheticSpec spec;
  std::string gen_out = "data";
  std::string gen_ratios = "0.5,0.45,0.05";
  gen->add_option("--out", gen_out, "output directory");
  gen->add_option("--seed", spec.seed, "random seed");
  gen->add_option("--classes", spec.n_classes, "number of classes");
  gen->add_option("--videos-per-class", spec.videos_per_class, "videos per class");
  gen->add_option("--nf", spec.n_f, "feature dimension");
  gen->add_option("--len-min", spec.min_len, "minimum clips per video");
  gen->add_option("--len-max", spec.max_len, "maximum clips per video");
  gen->add_option("--noise", spec.noise, "additive noise level");
  gen->add_option("--distractor", spec.distractor_fraction,
                  "fraction of class-agnostic clips");
  gen->add_option("--clip-rate", spec.clip_rate, "clip rate in Hz");
  gen->add_option("--split-ratios", gen_ratios, "train,codebook,query ratios");
  gen->callback([&] {
    const auto ratios = parse_csv_doubles(gen_ratios);
    if (ratios.size() != 3) throw msh::ConfigError("--split-ratios needs three values");
    msh::SyntheticGenerator generator(spec);
    msh::DatasetManifest manifest = generator.generate(gen_out);
    manifest = msh::split_dataset(manifest, ratios[0], ratios[1], ratios[2],
                                  msh::hash_label(spec.seed, "split"));
    msh::save_manifest(manifest,
                       (std::filesystem::path(gen_out) / "manifest.txt").string());
    std::printf("dataset %s: %zu videos, %u classes -> %s\n", manifest.dataset_id.c_str(),
                manifest.entries.size(), manifest.n_classes(), gen_out.c_str());
  });

  // ---- train --------------------------------------------------------------
  auto* train = app.add_subcommand("train", "train a primary encoder/decoder pair");
  TrainFlags train_flags;
  std::string train_data, train_out = "primary.mshm", train_metrics;
  train->add_option("--data", train_data, "dataset manifest")->required();
  train->add_option("--regime", train_flags.regime, "ssth-rt, ssth-rt+ or ssth-rt++");
  train->add_option("--out", train_out, "output model file");
  train->add_option("--metrics", train_metrics, "epoch loss CSV");
  add_train_flags(train, train_flags);
  train->callback([&] {
    const msh::TrainingConfig cfg = resolve_config(train_flags, msh::Regime::kSsthRt);
    if (msh::is_secondary_regime(cfg.regime)) {
      throw msh::ConfigError("train expects a primary regime; use distill for " +
                             std::string(msh::regime_name(cfg.regime)));
    }
    const auto manifest = msh::load_manifest(train_data);
    const auto dataset = msh::load_split(manifest, msh::Split::kTrain);
    msh::log::info("training " + std::string(msh::regime_name(cfg.regime)) + " on " +
                   std::to_string(dataset.size()) + " videos");
    const msh::TrainResult result = msh::train_primary(cfg, dataset, train_metrics);
    msh::save_model(train_out, result.encoder, &result.decoders);
    std::printf("trained %s for %d epochs, final loss %.6g -> %s\n",
                msh::regime_name(cfg.regime), cfg.epochs, result.epoch_loss.back(),
                train_out.c_str());
  });

  // ---- distill ------------------------------------------------------------
  auto* distill = app.add_subcommand("distill", "train a look-ahead secondary encoder");
  TrainFlags distill_flags;
  std::string distill_data, distill_primary, distill_out = "secondary.mshm",
              distill_metrics;
  distill->add_option("--data", distill_data, "dataset manifest")->required();
  distill->add_option("--primary", distill_primary, "trained primary model file")
      ->required();
  distill->add_option("--regime", distill_flags.regime, "la-reco or la-code");
  distill->add_option("--out", distill_out, "output model file");
  distill->add_option("--metrics", distill_metrics, "epoch loss CSV");
  add_train_flags(distill, distill_flags);
  distill->callback([&] {
    msh::TrainingConfig cfg = resolve_config(distill_flags, msh::Regime::kLaCode);
    if (!msh::is_secondary_regime(cfg.regime)) {
      throw msh::ConfigError("distill expects la-reco or la-code");
    }
    const msh::ModelFile primary = msh::load_model(distill_primary);
    cfg.n_bits = primary.encoder.n_bits;
    if (cfg.regime == msh::Regime::kLaReco && !primary.decoders.has_value()) {
      throw msh::ConfigError("la-reco needs a primary model file with decoders");
    }
    const auto manifest = msh::load_manifest(distill_data);
    const auto dataset = msh::load_split(manifest, msh::Split::kTrain);
    const msh::DistillResult result = msh::train_secondary(
        cfg.regime, primary.encoder,
        primary.decoders.has_value() ? &*primary.decoders : nullptr, cfg, dataset,
        distill_metrics);
    msh::save_model(distill_out, result.encoder, nullptr);
    std::printf("distilled %s for %d epochs, final loss %.6g -> %s\n",
                msh::regime_name(cfg.regime), cfg.epochs, result.epoch_loss.back(),
                distill_out.c_str());
  });

  // ---- build-codebook -----------------------------------------------------
  auto* build = app.add_subcommand("build-codebook", "hash the database split");
  std::string cb_model, cb_data, cb_mode = "plain", cb_alphas = "0.1..1.0",
              cb_out = "codebook.mshc";
  build->add_option("--model", cb_model, "encoder model file")->required();
  build->add_option("--data", cb_data, "dataset manifest")->required();
  build->add_option("--mode", cb_mode, "plain or duplicated")
      ->check(CLI::IsMember({"plain", "duplicated"}));
  build->add_option("--alphas", cb_alphas, "grid for duplicated mode");
  build->add_option("--out", cb_out, "output codebook file");
  build->callback([&] {
    const msh::EncoderModel enc = load_encoder(cb_model);
    const auto manifest = msh::load_manifest(cb_data);
    const auto database = msh::load_split(manifest, msh::Split::kCodebook);
    const msh::Codebook cb = msh::build_codebook(
        enc, database,
        cb_mode == "plain" ? msh::CodebookMode::kPlain : msh::CodebookMode::kDuplicated,
        parse_alphas(cb_alphas));
    cb.save(cb_out);
    std::printf("codebook: %zu entries, %u bits -> %s\n", cb.size(), cb.n_bits(),
                cb_out.c_str());
  });

  // ---- query --------------------------------------------------------------
  auto* query = app.add_subcommand("query", "search the codebook with one video");
  std::string q_model, q_codebook, q_features;
  double q_alpha = 1.0;
  std::size_t q_k = 20;
  bool q_purge = false;
  query->add_option("--model", q_model, "query encoder model file")->required();
  query->add_option("--codebook", q_codebook, "codebook file")->required();
  query->add_option("--features", q_features, "feature file of the query video")
      ->required();
  query->add_option("--alpha", q_alpha, "observe only this fraction of the video");
  query->add_option("--k", q_k, "results to return");
  query->add_flag("--purge", q_purge, "purge per-video duplicates (duplicated codebooks)");
  query->callback([&] {
    const msh::EncoderModel enc = load_encoder(q_model);
    const msh::Codebook cb = msh::Codebook::load(q_codebook);
    const msh::FeatureSequence seq = msh::read_features(q_features);
    const msh::Matrix prefix = msh::clip_prefix(seq.clips, q_alpha);
    const msh::Bitcode code = msh::encode_sequence(enc, prefix).final;
    msh::RetrievalResult r =
        msh::search(cb, code, q_purge ? q_k * std::max<std::size_t>(1, cb.n_alphas()) : q_k);
    if (q_purge) {
      r = msh::purge_duplicates(r);
      if (r.items.size() > q_k) r.items.resize(q_k);
    }
    std::printf("rank\tvideo\talpha\tdistance\n");
    for (std::size_t i = 0; i < r.items.size(); ++i) {
      std::printf("%zu\t%llu\t%.2f\t%u\n", i + 1,
                  static_cast<unsigned long long>(r.items[i].video_id), r.items[i].alpha,
                  r.items[i].distance);
    }
  });

  // ---- stream-sim ---------------------------------------------------------
  auto* stream = app.add_subcommand(
      "stream-sim", "replay a feature file clip by clip, printing top-k after each");
  std::string s_model, s_codebook, s_features;
  std::size_t s_k = 5;
  bool s_purge = false;
  stream->add_option("--model", s_model, "query encoder model file")->required();
  stream->add_option("--codebook", s_codebook, "codebook file")->required();
  stream->add_option("--features", s_features, "feature file to replay")->required();
  stream->add_option("--k", s_k, "results per clip");
  stream->add_flag("--purge", s_purge, "purge per-video duplicates");
  stream->callback([&] {
    const msh::EncoderModel enc = load_encoder(s_model);
    const msh::Codebook cb = msh::Codebook::load(s_codebook);
    const msh::FeatureSequence seq = msh::read_features(s_features);
    msh::StreamSession session(enc);
    std::printf("clip\tfrac\tresults\n");
    for (std::size_t t = 0; t < seq.length(); ++t) {
      session.push(seq.clips.row(t), seq.dim());
      msh::RetrievalResult r = session.query(
          cb, s_purge ? s_k * std::max<std::size_t>(1, cb.n_alphas()) : s_k);
      if (s_purge) {
        r = msh::purge_duplicates(r);
        if (r.items.size() > s_k) r.items.resize(s_k);
      }
      std::printf("%zu\t%.3f\t", t + 1,
                  static_cast<double>(t + 1) / static_cast<double>(seq.length()));
      for (std::size_t i = 0; i < r.items.size(); ++i) {
        std::printf("%s%llu:%u", i ? " " : "",
                    static_cast<unsigned long long>(r.items[i].video_id),
                    r.items[i].distance);
      }
      std::printf("\n");
    }
  });

  // ---- eval ---------------------------------------------------------------
  auto* eval_cmd = app.add_subcommand("eval", "observation-level sweep with mAP@K");
  std::string e_model, e_codebook, e_data, e_method = "method", e_out = "report.csv",
              e_json, e_alphas = "0.1..1.0";
  int e_k = 20;
  bool e_purge = false;
  std::uint64_t e_seed = 0;
  eval_cmd->add_option("--model", e_model, "query encoder model file")->required();
  eval_cmd->add_option("--codebook", e_codebook, "codebook file")->required();
  eval_cmd->add_option("--data", e_data, "dataset manifest (query split)")->required();
  eval_cmd->add_option("--method", e_method, "method label for report rows");
  eval_cmd->add_option("--k", e_k, "ranking depth K");
  eval_cmd->add_option("--alphas", e_alphas, "observation levels");
  eval_cmd->add_option("--out", e_out, "CSV report path");
  eval_cmd->add_option("--json", e_json, "also write a JSON report here");
  eval_cmd->add_flag("--purge", e_purge, "purge duplicates (ssth-rt++ codebooks)");
  eval_cmd->add_option("--seed", e_seed, "seed recorded in the report metadata");
  eval_cmd->callback([&] {
    const msh::EncoderModel enc = load_encoder(e_model);
    const msh::Codebook cb = msh::Codebook::load(e_codebook);
    const auto manifest = msh::load_manifest(e_data);
    const auto queries = msh::load_split(manifest, msh::Split::kQuery);
    std::unordered_map<std::uint64_t, std::uint32_t> classes;
    for (const auto* entry : manifest.in_split(msh::Split::kCodebook)) {
      classes.emplace(entry->video_id, entry->class_id);
    }
    const msh::MethodBundle bundle{e_method, &enc, &cb, e_purge};
    msh::EvalReport report =
        msh::sweep(bundle, queries, classes, parse_alphas(e_alphas), e_k);
    report.seed = e_seed;
    report.dataset_id = manifest.dataset_id;
    report.timestamp = timestamp_utc();
    msh::write_report_csv(report, e_out);
    if (!e_json.empty()) msh::write_report_json(report, e_json);
    std::printf("report: %zu rows -> %s\n", report.rows.size(), e_out.c_str());
    try {
      const msh::RangeAverages agg = msh::aggregate(report, e_method, enc.n_bits);
      std::printf("%s n_bits=%d VE=%.4f E=%.4f O=%.4f\n", e_method.c_str(), enc.n_bits,
                  agg.very_early, agg.early, agg.overall);
    } catch (const msh::ConfigError&) {
      // Partial grids have no VE/E/O summary.
    }
  });

  // ---- bench --------------------------------------------------------------
  auto* bench = app.add_subcommand("bench", "search throughput measurement");
  std::string b_codebook;
  std::size_t b_entries = 42500, b_queries = 200, b_k = 20;
  std::uint32_t b_bits = 256;
  std::uint64_t b_seed = 1;
  bool b_scaling = false;
  bench->add_option("--codebook", b_codebook, "measure an existing codebook file");
  bench->add_option("--entries", b_entries, "synthetic codebook size");
  bench->add_option("--bits", b_bits, "synthetic code width");
  bench->add_option("--queries", b_queries, "number of timed queries");
  bench->add_option("--k", b_k, "ranking depth");
  bench->add_option("--seed", b_seed, "query generator seed");
  bench->add_flag("--scaling", b_scaling, "also time entries/2 and 2x entries");
  bench->callback([&] {
    auto print_report = [](const msh::BenchReport& r) {
      std::printf(
          "entries=%zu bits=%u queries=%zu k=%zu median_us=%.2f p99_us=%.2f mean_us=%.2f "
          "distance_evals=%zu\n",
          r.n_entries, r.n_bits, r.n_queries, r.k, r.median_us, r.p99_us, r.mean_us,
          r.distance_evals_per_query);
    };
    if (!b_codebook.empty()) {
      print_report(msh::bench_search(msh::Codebook::load(b_codebook), b_queries, b_k, b_seed));
      return;
    }
    const msh::Codebook base = msh::random_codebook(b_entries, b_bits, b_seed);
    const msh::BenchReport mid = msh::bench_search(base, b_queries, b_k, b_seed);
    print_report(mid);
    if (b_scaling) {
      const msh::Codebook half = msh::random_codebook(b_entries / 2, b_bits, b_seed + 1);
      const msh::Codebook twice = msh::random_codebook(b_entries * 2, b_bits, b_seed + 2);
      const msh::BenchReport r_half = msh::bench_search(half, b_queries, b_k, b_seed);
      const msh::BenchReport r_twice = msh::bench_search(twice, b_queries, b_k, b_seed);
      print_report(r_half);
      print_report(r_twice);
      std::printf("scaling: x2 ratio %.2f (vs half: %.2f)\n", r_twice.median_us / mid.median_us,
                  mid.median_us / r_half.median_us);
    }
  });

  CLI11_PARSE(app, argc, argv);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run_cli(argc, argv);
  } catch (const msh::ConfigError& e) {
    msh::log::error(e.what());
    return kExitConfig;
  } catch (const msh::IoError& e) {
    msh::log::error(e.what());
    return kExitIo;
  } catch (const msh::FormatError& e) {
    msh::log::error(e.what());
    return kExitIo;
  } catch (const msh::ShapeError& e) {
    msh::log::error(e.what());
    return kExitState;
  } catch (const msh::StateError& e) {
    msh::log::error(e.what());
    return kExitState;
  } catch (const std::exception& e) {
    msh::log::error(std::string("unexpected: ") + e.what());
    return 5;
  }
}
