#include "dnres/data.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <numbers>
#include <sstream>

#include "dnres/image_io.hpp"

namespace dnres {
namespace {

std::vector<std::size_t> axis_origins(std::size_t extent, std::size_t stride) {
  std::vector<std::size_t> out;
  for (std::size_t o = 0; o + kInputPatch <= extent; o += stride) out.push_back(o);
  return out;
}

std::size_t jittered(std::size_t origin, std::size_t jitter, std::size_t max_origin, Rng& rng) {
  if (jitter == 0) return origin;
  const auto shift = static_cast<std::ptrdiff_t>(rng.below(2 * jitter + 1)) - static_cast<std::ptrdiff_t>(jitter);
  const auto moved = static_cast<std::ptrdiff_t>(origin) + shift;
  return static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(moved, 0, static_cast<std::ptrdiff_t>(max_origin)));
}

TensorF crop(const TensorF& image, std::size_t row, std::size_t col, std::size_t size) {
  TensorF out(1, 1, size, size);
  for (std::size_t y = 0; y < size; ++y) {
    for (std::size_t x = 0; x < size; ++x) out(0, 0, y, x) = image(0, 0, row + y, col + x);
  }
  return out;
}

struct Origin {
  std::size_t row, col;
};

std::vector<Origin> patch_origins(std::size_t h, std::size_t w, const PatchOptions& options, Rng& rng) {
  if (options.stride == 0) throw InvalidArgument("patch stride must be > 0");
  std::vector<Origin> out;
  if (h < kInputPatch || w < kInputPatch) return out;
  for (std::size_t r : axis_origins(h, options.stride)) {
    for (std::size_t c : axis_origins(w, options.stride)) {
      const std::size_t jr = jittered(r, options.jitter, h - kInputPatch, rng);
      const std::size_t jc = jittered(c, options.jitter, w - kInputPatch, rng);
      out.push_back({jr, jc});
    }
  }
  return out;
}

PatchPair make_pair(const TensorF& clean, const TensorF& degraded, Origin o, const std::string& id, int model) {
  return {crop(degraded, o.row, o.col, kInputPatch),
          crop(clean, o.row + kTargetOffset, o.col + kTargetOffset, kTargetPatch), id, o.row, o.col, model};
}

void require_single_plane(const char* op, const TensorF& image) {
  if (image.n() != 1) throw ShapeError(op, "batch", 1, image.n());
  if (image.c() != 1) throw ShapeError(op, "channels", 1, image.c());
}

}  // namespace

std::vector<PatchPair> extract_patch_pairs(const TensorF& clean, const TensorF& degraded, const PatchOptions& options,
                                           Rng& rng, const std::string& source_id, int model_index) {
  require_single_plane("extract_patch_pairs", clean);
  require_same_shape("extract_patch_pairs", clean.shape(), degraded.shape());
  if (clean.h() < kInputPatch || clean.w() < kInputPatch) {
    std::cerr << "warning: image '" << source_id << "' (" << clean.h() << "x" << clean.w()
              << ") is smaller than a " << kInputPatch << "x" << kInputPatch << " patch; skipped\n";
    return {};
  }
  std::vector<PatchPair> out;
  for (const Origin& o : patch_origins(clean.h(), clean.w(), options, rng)) {
    out.push_back(make_pair(clean, degraded, o, source_id, model_index));
  }
  return out;
}

std::string to_string(Split split) { return split == Split::train ? "train" : "test"; }

std::vector<std::filesystem::path> DatasetManifest::paths(Split split) const {
  std::vector<std::filesystem::path> out;
  for (const auto& e : entries) {
    if (e.split == split) out.push_back(e.path);
  }
  return out;
}

DatasetManifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest '" + path.string() + "'");
  DatasetManifest m;
  const auto base = path.parent_path();
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    const auto tab = line.find('\t');
    std::string file = line.substr(0, tab);
    std::string split = tab == std::string::npos ? "train" : line.substr(tab + 1);
    ManifestEntry e;
    if (split == "train") {
      e.split = Split::train;
    } else if (split == "test") {
      e.split = Split::test;
    } else {
      throw FormatError(path.string() + ":" + std::to_string(lineno) + ": unknown split '" + split + "'");
    }
    std::filesystem::path p(file);
    e.path = p.is_absolute() ? p : base / p;
    m.entries.push_back(std::move(e));
  }
  return m;
}

void write_manifest(const std::filesystem::path& path, const std::vector<ManifestEntry>& entries) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  for (const auto& e : entries) out << e.path.string() << "\t" << to_string(e.split) << "\n";
}

std::vector<LabeledImage> load_split(const DatasetManifest& manifest, Split split) {
  std::vector<LabeledImage> out;
  for (const auto& p : manifest.paths(split)) {
    LabeledImage img;
    img.id = p.stem().string();
    img.clean = load_grayscale(p);
    if (manifest.degraded_dir) {
      img.degraded = load_grayscale(*manifest.degraded_dir / p.filename());
      require_same_shape("load_split", img.clean.shape(), img.degraded->shape());
    }
    out.push_back(std::move(img));
  }
  return out;
}

TrainingSet build_training_set(const std::vector<LabeledImage>& images, const std::vector<NoiseModel>& models,
                               bool blind, const PatchOptions& options, std::uint64_t seed) {
  TrainingSet set;
  set.models = models;
  const bool external = !images.empty() && images.front().degraded.has_value();
  if (!external) {
    if (models.empty()) throw InvalidArgument("build_training_set: no noise model given");
    if (!blind && models.size() != 1) {
      throw InvalidArgument("build_training_set: non-blind training takes exactly one noise model");
    }
  }
  Rng noise_root(seed, 1);
  Rng patch_rng(seed, 2);
  for (std::size_t i = 0; i < images.size(); ++i) {
    const LabeledImage& img = images[i];
    require_single_plane("build_training_set", img.clean);
    if (img.degraded) {
      auto pairs = extract_patch_pairs(img.clean, *img.degraded, options, patch_rng, img.id, -1);
      set.pairs.insert(set.pairs.end(), std::make_move_iterator(pairs.begin()), std::make_move_iterator(pairs.end()));
      continue;
    }
    // Noise for (image i, model m) comes from its own substream, so it does
    // not depend on which other images or models are present.
    std::vector<TensorF> degraded;
    for (std::size_t m = 0; m < models.size(); ++m) {
      Rng r = noise_root.substream(i * 1024 + m);
      degraded.push_back(degrade(img.clean, models[m], r));
    }
    if (img.clean.h() < kInputPatch || img.clean.w() < kInputPatch) {
      extract_patch_pairs(img.clean, degraded[0], options, patch_rng, img.id);  // emits the warning
      continue;
    }
    for (const Origin& o : patch_origins(img.clean.h(), img.clean.w(), options, patch_rng)) {
      const std::size_t m = models.size() == 1 ? 0 : static_cast<std::size_t>(patch_rng.below(models.size()));
      set.pairs.push_back(make_pair(img.clean, degraded[m], o, img.id, static_cast<int>(m)));
    }
  }
  return set;
}

BatchIterator::BatchIterator(const std::vector<PatchPair>& pairs, std::size_t batch_size, std::uint64_t epoch_seed)
    : pairs_(&pairs), batch_size_(batch_size) {
  if (batch_size == 0) throw InvalidArgument("batch size must be > 0");
  Rng rng(epoch_seed, 3);
  order_ = rng.permutation(pairs.size());
}

std::size_t BatchIterator::batch_count() const noexcept {
  return (order_.size() + batch_size_ - 1) / batch_size_;
}

bool BatchIterator::next(Batch& batch) {
  if (cursor_ >= order_.size()) return false;
  const std::size_t end = std::min(order_.size(), cursor_ + batch_size_);
  const std::size_t count = end - cursor_;
  batch.noisy = TensorF(count, 1, kInputPatch, kInputPatch);
  batch.clean = TensorF(count, 1, kTargetPatch, kTargetPatch);
  batch.indices.assign(order_.begin() + static_cast<std::ptrdiff_t>(cursor_),
                       order_.begin() + static_cast<std::ptrdiff_t>(end));
  batch.model_index.clear();
  for (std::size_t i = 0; i < count; ++i) {
    const PatchPair& p = (*pairs_)[batch.indices[i]];
    std::copy(p.noisy.data().begin(), p.noisy.data().end(), batch.noisy.sample(i).begin());
    std::copy(p.clean.data().begin(), p.clean.data().end(), batch.clean.sample(i).begin());
    batch.model_index.push_back(p.model_index);
  }
  cursor_ = end;
  return true;
}

TensorF synthetic_image(SyntheticKind kind, std::size_t size, Rng& rng) {
  TensorF img(1, 1, size, size);
  const double lo = 0.05, hi = 0.95;
  switch (kind) {
    case SyntheticKind::gradient: {
      const double angle = rng.uniform() * 2 * std::numbers::pi;
      const double a = 0.15 + 0.2 * rng.uniform();
      const double freq = 0.02 + 0.06 * rng.uniform();
      for (std::size_t y = 0; y < size; ++y) {
        for (std::size_t x = 0; x < size; ++x) {
          const double t = (std::cos(angle) * x + std::sin(angle) * y) / static_cast<double>(size);
          const double v = 0.5 + 0.3 * t + a * std::sin(freq * (x + 0.7 * y));
          img(0, 0, y, x) = static_cast<float>(v);
        }
      }
      break;
    }
    case SyntheticKind::checkerboard: {
      const std::size_t cell = 4 + static_cast<std::size_t>(rng.below(9));
      const double dark = 0.1 + 0.25 * rng.uniform();
      const double light = 0.6 + 0.3 * rng.uniform();
      const std::size_t oy = static_cast<std::size_t>(rng.below(cell));
      const std::size_t ox = static_cast<std::size_t>(rng.below(cell));
      for (std::size_t y = 0; y < size; ++y) {
        for (std::size_t x = 0; x < size; ++x) {
          const bool on = (((y + oy) / cell) + ((x + ox) / cell)) % 2 == 0;
          img(0, 0, y, x) = static_cast<float>(on ? light : dark);
        }
      }
      break;
    }
    case SyntheticKind::filtered_noise: {
      const int radius = 2 + static_cast<int>(rng.below(4));
      std::vector<double> white(size * size);
      for (double& v : white) v = rng.normal();
      std::vector<double> blurred(size * size, 0.0);
      const auto s = static_cast<std::ptrdiff_t>(size);
      for (std::ptrdiff_t y = 0; y < s; ++y) {
        for (std::ptrdiff_t x = 0; x < s; ++x) {
          double acc = 0;
          int count = 0;
          for (int dy = -radius; dy <= radius; ++dy) {
            for (int dx = -radius; dx <= radius; ++dx) {
              const std::ptrdiff_t yy = std::clamp<std::ptrdiff_t>(y + dy, 0, s - 1);
              const std::ptrdiff_t xx = std::clamp<std::ptrdiff_t>(x + dx, 0, s - 1);
              acc += white[static_cast<std::size_t>(yy * s + xx)];
              ++count;
            }
          }
          blurred[static_cast<std::size_t>(y * s + x)] = acc / count;
        }
      }
      const auto [mn, mx] = std::minmax_element(blurred.begin(), blurred.end());
      const double range = std::max(*mx - *mn, 1e-12);
      for (std::size_t i = 0; i < blurred.size(); ++i) {
        img[i] = static_cast<float>(0.15 + 0.7 * (blurred[i] - *mn) / range);
      }
      break;
    }
    case SyntheticKind::shapes: {
      img.fill(static_cast<float>(0.2 + 0.3 * rng.uniform()));
      const int shapes = 3 + static_cast<int>(rng.below(4));
      for (int k = 0; k < shapes; ++k) {
        const double cy = rng.uniform() * size, cx = rng.uniform() * size;
        const double r = 4 + rng.uniform() * size / 4.0;
        const float level = static_cast<float>(0.1 + 0.8 * rng.uniform());
        const bool disc = rng.below(2) == 0;
        for (std::size_t y = 0; y < size; ++y) {
          for (std::size_t x = 0; x < size; ++x) {
            const double dy = y - cy, dx = x - cx;
            const bool inside = disc ? dy * dy + dx * dx <= r * r : std::fabs(dy) <= r && std::fabs(dx) <= 0.6 * r;
            if (inside) img(0, 0, y, x) = level;
          }
        }
      }
      break;
    }
  }
  for (float& v : img.data()) v = std::clamp(v, static_cast<float>(lo), static_cast<float>(hi));
  return img;
}

std::vector<LabeledImage> synthetic_corpus(std::size_t count, std::size_t size, std::uint64_t seed) {
  static constexpr SyntheticKind kinds[] = {SyntheticKind::gradient, SyntheticKind::checkerboard,
                                            SyntheticKind::filtered_noise, SyntheticKind::shapes};
  std::vector<LabeledImage> out;
  Rng root(seed, 4);
  for (std::size_t i = 0; i < count; ++i) {
    Rng r = root.substream(i);
    std::ostringstream id;
    id << "synthetic-" << std::setw(3) << std::setfill('0') << i;
    out.push_back({id.str(), synthetic_image(kinds[i % 4], size, r), std::nullopt});
  }
  return out;
}

}  // namespace dnres
