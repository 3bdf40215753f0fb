// Feature-sequence ingestion and the synthetic labeled dataset generator.
// The artifact consumes precomputed clip features; video decoding and the
// upstream 3D CNN are out of scope.
//
// Feature file (little-endian): magic "FSEQ", u32 version, u32 n_f, u32 T,
// f32 clip rate, u32 class id, then T*n_f f32 values, clip-major.
// Manifest: text, one "video_id class_id split path" line per video.
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "msh/matrix.hpp"

namespace msh {

struct FeatureSequence {
  std::uint64_t video_id = 0;
  std::uint32_t class_id = 0;
  float clip_rate = 0.47f;
  Matrix clips;  // T x n_f

  std::size_t length() const { return clips.rows(); }
  std::size_t dim() const { return clips.cols(); }
};

// First max(1, floor(alpha * T)) clips; alpha must lie in (0, 1].
Matrix clip_prefix(const Matrix& clips, double alpha);

void write_features(const FeatureSequence& seq, const std::string& path);
FeatureSequence read_features(const std::string& path);

enum class Split { kTrain, kCodebook, kQuery };
const char* split_name(Split s);
Split parse_split(const std::string& name);

struct ManifestEntry {
  std::uint64_t video_id = 0;
  std::uint32_t class_id = 0;
  Split split = Split::kTrain;
  std::string path;  // relative to the manifest's directory
};

struct DatasetManifest {
  std::string dataset_id;
  std::string base_dir;  // set on load; not serialized
  std::vector<ManifestEntry> entries;

  std::vector<const ManifestEntry*> in_split(Split s) const;
  std::uint32_t n_classes() const;
};

void save_manifest(const DatasetManifest& m, const std::string& path);
DatasetManifest load_manifest(const std::string& path);

// Loads every feature file of a split, in manifest order, with ids and
// labels attached from the manifest.
std::vector<FeatureSequence> load_split(const DatasetManifest& m, Split s);

// Synthetic corpus: each class follows a smooth low-dimensional trajectory
// projected into feature space; a video is a stretched sample of it plus
// Gaussian noise, book-ended by class-agnostic distractor clips (models
// untrimmed video). Output is a pure function of these parameters.
struct SyntheticSpec {
  int n_classes = 10;
  int videos_per_class = 50;
  int n_f = 32;
  int min_len = 10;  // clips
  int max_len = 40;
  double noise = 0.1;
  double distractor_fraction = 0.2;
  float clip_rate = 0.47f;
  int latent_dim = 4;
  std::uint64_t seed = 0;

  void validate() const;
};

class SyntheticGenerator {
 public:
  explicit SyntheticGenerator(SyntheticSpec spec);

  struct VideoPlan {
    int length = 0;
    double stretch = 1.0;     // +-30% temporal stretch
    int distract_prefix = 0;  // clips of distractor content at the start
    int distract_suffix = 0;
  };

  const SyntheticSpec& spec() const { return spec_; }
  VideoPlan plan(std::uint32_t class_id, int video_index) const;

  // Noise-free clip value at position j of a video with the given stretch.
  std::vector<double> content_clip(std::uint32_t class_id, double stretch, int j) const;
  std::vector<double> distractor_clip(double stretch, int j) const;

  FeatureSequence make_video(std::uint32_t class_id, int video_index) const;

  // Writes feature files under <out_dir>/features plus <out_dir>/manifest.txt
  // with every video assigned to the train split.
  DatasetManifest generate(const std::string& out_dir) const;

 private:
  std::vector<double> curve_point(const std::vector<double>& coeffs, const Matrix& proj,
                                  double s) const;
  SyntheticSpec spec_;
  std::vector<std::vector<double>> class_coeffs_;  // per class: harmonics x latent
  std::vector<Matrix> class_proj_;                 // per class: n_f x latent
  std::vector<double> distractor_coeffs_;
  Matrix distractor_proj_;
};

// Stratified split into train/codebook/query. Ratios must sum to 1; per
// class the allocation follows largest remainder, so the per-class deviation
// from the global ratios is at most one video.
DatasetManifest split_dataset(const DatasetManifest& m, double train_ratio,
                              double codebook_ratio, double query_ratio,
                              std::uint64_t seed);

}  // namespace msh
