#include "msh/data.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <sstream>

#include "binio.hpp"
#include "msh/log.hpp"
#include "msh/rng.hpp"

namespace msh {

namespace fs = std::filesystem;

Matrix clip_prefix(const Matrix& clips, double alpha) {
  if (!(alpha > 0.0) || alpha > 1.0) {
    throw ConfigError("observation level must lie in (0, 1], got " + std::to_string(alpha));
  }
  const std::size_t t = clips.rows();
  std::size_t keep = static_cast<std::size_t>(std::floor(alpha * static_cast<double>(t)));
  if (keep < 1) keep = 1;
  if (keep >= t) return clips;
  Matrix out(keep, clips.cols());
  for (std::size_t r = 0; r < keep; ++r) {
    for (std::size_t c = 0; c < clips.cols(); ++c) out(r, c) = clips(r, c);
  }
  return out;
}

namespace {
constexpr char kFeatureMagic[4] = {'F', 'S', 'E', 'Q'};
constexpr std::uint32_t kFeatureVersion = 1;
}  // namespace

void write_features(const FeatureSequence& seq, const std::string& path) {
  if (seq.length() == 0) throw ShapeError("write_features: empty sequence");
  auto os = io::open_output(path, "feature file");
  io::write_magic(os, kFeatureMagic);
  io::write_u32(os, kFeatureVersion);
  io::write_u32(os, static_cast<std::uint32_t>(seq.dim()));
  io::write_u32(os, static_cast<std::uint32_t>(seq.length()));
  io::write_f32(os, seq.clip_rate);
  io::write_u32(os, seq.class_id);
  io::write_f32_block(os, seq.clips.data(), seq.clips.size());
  if (!os) throw IoError("failed writing feature file: " + path);
}

FeatureSequence read_features(const std::string& path) {
  auto is = io::open_input(path, "feature file");
  io::expect_magic(is, kFeatureMagic, "feature file");
  const std::uint32_t version = io::read_u32(is, "feature version");
  if (version != kFeatureVersion) {
    throw FormatError("unsupported feature file version " + std::to_string(version));
  }
  const std::uint32_t n_f = io::read_u32(is, "feature n_f");
  const std::uint32_t t = io::read_u32(is, "feature clip count");
  if (n_f == 0 || t == 0) throw FormatError("feature header has zero dimension");
  FeatureSequence seq;
  seq.clip_rate = io::read_f32(is, "clip rate");
  seq.class_id = io::read_u32(is, "class id");
  seq.clips.resize(t, n_f);
  io::read_f32_block(is, seq.clips.data(), seq.clips.size(), "feature values");
  return seq;
}

const char* split_name(Split s) {
  switch (s) {
    case Split::kTrain: return "train";
    case Split::kCodebook: return "codebook";
    case Split::kQuery: return "query";
  }
  return "?";
}

Split parse_split(const std::string& name) {
  if (name == "train") return Split::kTrain;
  if (name == "codebook") return Split::kCodebook;
  if (name == "query") return Split::kQuery;
  throw FormatError("unknown split name: " + name);
}

std::vector<const ManifestEntry*> DatasetManifest::in_split(Split s) const {
  std::vector<const ManifestEntry*> out;
  for (const auto& e : entries) {
    if (e.split == s) out.push_back(&e);
  }
  return out;
}

std::uint32_t DatasetManifest::n_classes() const {
  std::uint32_t max_class = 0;
  for (const auto& e : entries) max_class = std::max(max_class, e.class_id);
  return entries.empty() ? 0 : max_class + 1;
}

void save_manifest(const DatasetManifest& m, const std::string& path) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw IoError("cannot open manifest for writing: " + path);
  os << "# msh-manifest v1\n";
  os << "# dataset_id " << m.dataset_id << "\n";
  os << "# columns: video_id class_id split path\n";
  for (const auto& e : m.entries) {
    os << e.video_id << ' ' << e.class_id << ' ' << split_name(e.split) << ' ' << e.path
       << '\n';
  }
  if (!os) throw IoError("failed writing manifest: " + path);
}

DatasetManifest load_manifest(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open manifest: " + path);
  DatasetManifest m;
  m.base_dir = fs::path(path).parent_path().string();
  std::string line;
  bool saw_header = false;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    if (line[0] == '#') {
      if (line.rfind("# msh-manifest", 0) == 0) saw_header = true;
      std::istringstream hs(line);
      std::string hash, key, value;
      hs >> hash >> key >> value;
      if (key == "dataset_id") m.dataset_id = value;
      continue;
    }
    std::istringstream ls(line);
    ManifestEntry e;
    std::string split_str;
    if (!(ls >> e.video_id >> e.class_id >> split_str >> e.path)) {
      throw FormatError("malformed manifest line: " + line);
    }
    e.split = parse_split(split_str);
    m.entries.push_back(std::move(e));
  }
  if (!saw_header) throw FormatError("missing manifest header in " + path);
  return m;
}

std::vector<FeatureSequence> load_split(const DatasetManifest& m, Split s) {
  std::vector<FeatureSequence> out;
  for (const auto& e : m.entries) {
    if (e.split != s) continue;
    const fs::path p = m.base_dir.empty() ? fs::path(e.path) : fs::path(m.base_dir) / e.path;
    FeatureSequence seq = read_features(p.string());
    seq.video_id = e.video_id;
    seq.class_id = e.class_id;
    out.push_back(std::move(seq));
  }
  return out;
}

// ---- synthetic generator ---------------------------------------------------

void SyntheticSpec::validate() const {
  if (n_classes < 1 || videos_per_class < 1 || n_f < 1 || latent_dim < 1) {
    throw ConfigError("synthetic spec: counts must be >= 1");
  }
  if (min_len < 1 || max_len < min_len) throw ConfigError("synthetic spec: bad length range");
  if (noise < 0.0) throw ConfigError("synthetic spec: noise must be >= 0");
  if (distractor_fraction < 0.0 || distractor_fraction >= 1.0) {
    throw ConfigError("synthetic spec: distractor fraction must lie in [0, 1)");
  }
}

namespace {
constexpr int kHarmonics = 3;

std::vector<double> draw_curve_coeffs(Rng& rng, int latent_dim) {
  // A constant offset per latent dimension plus decaying random harmonics:
  // smooth trajectories whose temporal means still differ between curves.
  std::vector<double> coeffs;
  coeffs.reserve(static_cast<std::size_t>(latent_dim) * (1 + kHarmonics * 2));
  for (int d = 0; d < latent_dim; ++d) coeffs.push_back(rng.uniform(-1.0, 1.0));
  for (int k = 1; k <= kHarmonics; ++k) {
    for (int d = 0; d < latent_dim; ++d) {
      coeffs.push_back(rng.uniform(-1.0, 1.0) / k);              // amplitude
      coeffs.push_back(rng.uniform(0.0, 6.283185307179586));     // phase
    }
  }
  return coeffs;
}

Matrix draw_projection(Rng& rng, int n_f, int latent_dim) {
  Matrix proj(n_f, latent_dim);
  const double scale = 1.0 / std::sqrt(static_cast<double>(latent_dim));
  for (std::size_t i = 0; i < proj.size(); ++i) proj.data()[i] = rng.normal(0.0, scale);
  return proj;
}

inline double quantize_f32(double v) { return static_cast<double>(static_cast<float>(v)); }
}  // namespace

SyntheticGenerator::SyntheticGenerator(SyntheticSpec spec) : spec_(spec) {
  spec_.validate();
  class_coeffs_.reserve(spec_.n_classes);
  class_proj_.reserve(spec_.n_classes);
  for (int c = 0; c < spec_.n_classes; ++c) {
    Rng rng(hash_combine(hash_label(spec_.seed, "class-curve"), c));
    class_coeffs_.push_back(draw_curve_coeffs(rng, spec_.latent_dim));
    class_proj_.push_back(draw_projection(rng, spec_.n_f, spec_.latent_dim));
  }
  Rng rng(hash_label(spec_.seed, "distractor-curve"));
  distractor_coeffs_ = draw_curve_coeffs(rng, spec_.latent_dim);
  distractor_proj_ = draw_projection(rng, spec_.n_f, spec_.latent_dim);
}

std::vector<double> SyntheticGenerator::curve_point(const std::vector<double>& coeffs,
                                                    const Matrix& proj, double s) const {
  std::vector<double> latent(spec_.latent_dim, 0.0);
  std::size_t idx = 0;
  for (int d = 0; d < spec_.latent_dim; ++d) latent[d] = coeffs[idx++];
  for (int k = 1; k <= kHarmonics; ++k) {
    for (int d = 0; d < spec_.latent_dim; ++d) {
      const double amplitude = coeffs[idx++];
      const double phase = coeffs[idx++];
      latent[d] += amplitude * std::sin(6.283185307179586 * k * s + phase);
    }
  }
  std::vector<double> out(spec_.n_f, 0.0);
  for (int i = 0; i < spec_.n_f; ++i) {
    double acc = 0.0;
    for (int d = 0; d < spec_.latent_dim; ++d) acc += proj(i, d) * latent[d];
    out[i] = acc;
  }
  return out;
}

SyntheticGenerator::VideoPlan SyntheticGenerator::plan(std::uint32_t class_id,
                                                       int video_index) const {
  Rng rng(hash_combine(hash_label(spec_.seed, "video-plan"),
                       static_cast<std::uint64_t>(class_id) * 1000003ull +
                           static_cast<std::uint64_t>(video_index)));
  VideoPlan p;
  p.length = spec_.min_len +
             static_cast<int>(rng.below(static_cast<std::uint64_t>(spec_.max_len - spec_.min_len + 1)));
  p.stretch = rng.uniform(0.7, 1.3);
  const int n_distract =
      static_cast<int>(std::floor(spec_.distractor_fraction * p.length));
  p.distract_prefix = (n_distract > 0) ? static_cast<int>(rng.below(n_distract + 1)) : 0;
  p.distract_suffix = n_distract - p.distract_prefix;
  return p;
}

std::vector<double> SyntheticGenerator::content_clip(std::uint32_t class_id, double stretch,
                                                     int j) const {
  const double denom = std::max(1, spec_.max_len - 1);
  const double s = std::min(1.0, stretch * j / denom);
  return curve_point(class_coeffs_[class_id], class_proj_[class_id], s);
}

std::vector<double> SyntheticGenerator::distractor_clip(double stretch, int j) const {
  const double denom = std::max(1, spec_.max_len - 1);
  const double s = std::min(1.0, stretch * j / denom);
  return curve_point(distractor_coeffs_, distractor_proj_, s);
}

FeatureSequence SyntheticGenerator::make_video(std::uint32_t class_id, int video_index) const {
  const VideoPlan p = plan(class_id, video_index);
  Rng noise_rng(hash_combine(hash_label(spec_.seed, "video-noise"),
                             static_cast<std::uint64_t>(class_id) * 1000003ull +
                                 static_cast<std::uint64_t>(video_index)));
  FeatureSequence seq;
  seq.class_id = class_id;
  seq.clip_rate = spec_.clip_rate;
  seq.clips.resize(p.length, spec_.n_f);
  for (int j = 0; j < p.length; ++j) {
    const bool distract = j < p.distract_prefix || j >= p.length - p.distract_suffix;
    std::vector<double> clip =
        distract ? distractor_clip(p.stretch, j) : content_clip(class_id, p.stretch, j);
    for (int i = 0; i < spec_.n_f; ++i) {
      double v = clip[i];
      if (spec_.noise > 0.0) v += spec_.noise * noise_rng.normal();
      seq.clips(j, i) = quantize_f32(v);
    }
  }
  return seq;
}

DatasetManifest SyntheticGenerator::generate(const std::string& out_dir) const {
  const fs::path root(out_dir);
  const fs::path feature_dir = root / "features";
  std::error_code ec;
  fs::create_directories(feature_dir, ec);
  if (ec) throw IoError("cannot create output directory: " + feature_dir.string());

  DatasetManifest m;
  m.base_dir = root.string();
  {
    std::uint64_t id = hash_label(spec_.seed, "dataset");
    id = hash_combine(id, static_cast<std::uint64_t>(spec_.n_classes) << 32 |
                              static_cast<std::uint64_t>(spec_.videos_per_class));
    id = hash_combine(id, static_cast<std::uint64_t>(spec_.n_f) << 32 |
                              (static_cast<std::uint64_t>(spec_.min_len) << 16) |
                              static_cast<std::uint64_t>(spec_.max_len));
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(id));
    m.dataset_id = buf;
  }

  std::uint64_t video_id = 0;
  for (int c = 0; c < spec_.n_classes; ++c) {
    for (int v = 0; v < spec_.videos_per_class; ++v) {
      FeatureSequence seq = make_video(static_cast<std::uint32_t>(c), v);
      seq.video_id = video_id;
      char name[32];
      std::snprintf(name, sizeof name, "v%05llu.fseq", static_cast<unsigned long long>(video_id));
      const std::string rel = (fs::path("features") / name).string();
      write_features(seq, (root / rel).string());
      m.entries.push_back(ManifestEntry{video_id, static_cast<std::uint32_t>(c),
                                        Split::kTrain, rel});
      ++video_id;
    }
  }
  save_manifest(m, (root / "manifest.txt").string());
  return m;
}

// ---- stratified split ------------------------------------------------------

DatasetManifest split_dataset(const DatasetManifest& m, double train_ratio,
                              double codebook_ratio, double query_ratio,
                              std::uint64_t seed) {
  const double sum = train_ratio + codebook_ratio + query_ratio;
  if (std::fabs(sum - 1.0) > 1e-9) throw ConfigError("split ratios must sum to 1");
  if (train_ratio < 0 || codebook_ratio < 0 || query_ratio < 0) {
    throw ConfigError("split ratios must be nonnegative");
  }

  // Group manifest positions by class.
  std::uint32_t max_class = 0;
  for (const auto& e : m.entries) max_class = std::max(max_class, e.class_id);
  std::vector<std::vector<std::size_t>> by_class(max_class + 1);
  for (std::size_t i = 0; i < m.entries.size(); ++i) {
    by_class[m.entries[i].class_id].push_back(i);
  }

  DatasetManifest out = m;
  const double ratios[3] = {train_ratio, codebook_ratio, query_ratio};
  const Split splits[3] = {Split::kTrain, Split::kCodebook, Split::kQuery};
  int required = 0;
  for (double r : ratios) {
    if (r > 0) ++required;
  }

  for (std::uint32_t c = 0; c < by_class.size(); ++c) {
    auto& members = by_class[c];
    if (members.empty()) continue;
    if (static_cast<int>(members.size()) < required) {
      throw ConfigError("class " + std::to_string(c) + " has only " +
                        std::to_string(members.size()) + " videos; " +
                        std::to_string(required) + " splits requested");
    }
    Rng rng(hash_combine(hash_label(seed, "split"), c));
    rng.shuffle(members);

    // Largest-remainder allocation; every nonzero split gets at least one.
    const std::size_t n = members.size();
    std::size_t counts[3];
    double fractions[3];
    std::size_t assigned = 0;
    for (int s = 0; s < 3; ++s) {
      const double exact = ratios[s] * static_cast<double>(n);
      counts[s] = static_cast<std::size_t>(std::floor(exact));
      fractions[s] = exact - static_cast<double>(counts[s]);
      assigned += counts[s];
    }
    while (assigned < n) {
      int best = 0;
      for (int s = 1; s < 3; ++s) {
        if (fractions[s] > fractions[best]) best = s;
      }
      counts[best] += 1;
      fractions[best] = -1.0;
      ++assigned;
    }
    for (int s = 0; s < 3; ++s) {
      if (ratios[s] > 0 && counts[s] == 0) {
        // Borrow one from the largest allocation to keep the split nonempty.
        int donor = 0;
        for (int d = 1; d < 3; ++d) {
          if (counts[d] > counts[donor]) donor = d;
        }
        counts[donor] -= 1;
        counts[s] += 1;
      }
    }

    std::size_t pos = 0;
    for (int s = 0; s < 3; ++s) {
      for (std::size_t i = 0; i < counts[s]; ++i) {
        out.entries[members[pos++]].split = splits[s];
      }
    }
  }
  return out;
}

}  // namespace msh
