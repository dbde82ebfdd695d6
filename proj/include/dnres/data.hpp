#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "dnres/noise.hpp"
#include "dnres/rng.hpp"
#include "dnres/tensor.hpp"

namespace dnres {

inline constexpr std::size_t kInputPatch = 33;
inline constexpr std::size_t kTargetPatch = 17;
inline constexpr std::size_t kTargetOffset = (kInputPatch - kTargetPatch) / 2;  // 8

/// A 33x33 degraded window and the clean 17x17 centre of the same window,
/// which is exactly the region the valid convolutions map it onto.
struct PatchPair {
  TensorF noisy;  // 1x1x33x33
  TensorF clean;  // 1x1x17x17
  std::string source_id;
  std::size_t row = 0;  // window origin in the source image
  std::size_t col = 0;
  int model_index = -1;  // which noise model produced `noisy`, -1 if external
};

struct PatchOptions {
  std::size_t stride = 17;
  std::size_t jitter = 0;  // each origin moves by up to +-jitter, clamped inside the image
};

/// Windows at the given stride. Images smaller than 33x33 yield no pairs
/// (a warning is printed). Every window lies fully inside the image.
std::vector<PatchPair> extract_patch_pairs(const TensorF& clean, const TensorF& degraded, const PatchOptions& options,
                                           Rng& rng, const std::string& source_id = {}, int model_index = -1);

enum class Split { train, test };
std::string to_string(Split split);

struct ManifestEntry {
  std::filesystem::path path;
  Split split = Split::train;
};

/// Line-oriented manifest: `path<TAB>split` per line, '#' comments, blank
/// lines ignored. Relative paths resolve against the manifest's directory.
struct DatasetManifest {
  std::vector<ManifestEntry> entries;
  std::optional<std::filesystem::path> degraded_dir;  // pre-degraded images with matching file names
  std::vector<NoiseModel> models;
  std::uint64_t seed = 0;

  std::vector<std::filesystem::path> paths(Split split) const;
};

DatasetManifest read_manifest(const std::filesystem::path& path);
void write_manifest(const std::filesystem::path& path, const std::vector<ManifestEntry>& entries);

struct LabeledImage {
  std::string id;
  TensorF clean;                    // 1x1xHxW in [0,1]
  std::optional<TensorF> degraded;  // set in directory-pair mode
};

/// Loads one split; PPM inputs are reduced to luma.
std::vector<LabeledImage> load_split(const DatasetManifest& manifest, Split split);

struct TrainingSet {
  std::vector<PatchPair> pairs;
  std::vector<NoiseModel> models;
};

/// Synthesises noise on each full image, then extracts pairs.
/// Non-blind: exactly one model. Blind: every patch location draws one of
/// the models uniformly at random. Images carrying `degraded` are used as
/// given. Fully determined by `seed`.
TrainingSet build_training_set(const std::vector<LabeledImage>& images, const std::vector<NoiseModel>& models,
                               bool blind, const PatchOptions& options, std::uint64_t seed);

struct Batch {
  TensorF noisy;  // Nx1x33x33
  TensorF clean;  // Nx1x17x17
  std::vector<std::size_t> indices;
  std::vector<int> model_index;
};

/// One epoch over `pairs` in an order shuffled from `epoch_seed`; the last
/// batch may be partial.
class BatchIterator {
 public:
  BatchIterator(const std::vector<PatchPair>& pairs, std::size_t batch_size, std::uint64_t epoch_seed);

  bool next(Batch& batch);
  std::size_t batch_count() const noexcept;
  const std::vector<std::size_t>& order() const noexcept { return order_; }

 private:
  const std::vector<PatchPair>* pairs_;
  std::size_t batch_size_;
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
};

enum class SyntheticKind { gradient, checkerboard, filtered_noise, shapes };

/// Procedural square test images in [0.05, 0.95].
TensorF synthetic_image(SyntheticKind kind, std::size_t size, Rng& rng);
/// `count` images cycling through all kinds, ids "synthetic-000" ...
std::vector<LabeledImage> synthetic_corpus(std::size_t count, std::size_t size, std::uint64_t seed);

}  // namespace dnres
