#include "maskface/dataset.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>

#include "maskface/errors.hpp"

namespace fs = std::filesystem;

namespace maskface {

std::size_t DatasetIndex::total_files() const {
  std::size_t n = 0;
  for (const auto& f : files) n += f.size();
  return n;
}

int DatasetIndex::class_index(const std::string& name) const {
  auto it = std::find(classes.begin(), classes.end(), name);
  if (it == classes.end()) throw IndexError("unknown class '" + name + "'");
  return static_cast<int>(it - classes.begin());
}

fs::path DatasetIndex::file_path(std::size_t cls, std::size_t i) const {
  return root / classes.at(cls) / files.at(cls).at(i);
}

bool is_image_file(const fs::path& path) {
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".ppm" || ext == ".png" || ext == ".jpg" || ext == ".jpeg";
}

DatasetIndex scan_dataset(const fs::path& root, int min_count) {
  std::error_code ec;
  if (!fs::is_directory(root, ec)) throw IoError("dataset root not found: " + root.string());
  if (min_count < 1) throw ParameterError("scan_dataset: min_count must be >= 1");

  std::vector<std::pair<std::string, std::vector<std::string>>> found;
  for (const auto& entry : fs::directory_iterator(root)) {
    if (!entry.is_directory()) continue;
    const auto name = entry.path().filename().string();
    if (name.empty() || name.front() == '.') continue;
    std::vector<std::string> images;
    for (const auto& file : fs::directory_iterator(entry.path())) {
      if (file.is_regular_file() && is_image_file(file.path())) images.push_back(file.path().filename().string());
    }
    if (static_cast<int>(images.size()) < min_count) continue;
    std::sort(images.begin(), images.end());
    found.emplace_back(name, std::move(images));
  }
  if (found.empty()) {
    throw EmptyDatasetError("no class under " + root.string() + " has at least " + std::to_string(min_count) +
                            " images");
  }
  std::sort(found.begin(), found.end(), [](const auto& a, const auto& b) { return a.first < b.first; });

  DatasetIndex index;
  index.root = root;
  for (auto& [name, images] : found) {
    index.classes.push_back(name);
    index.files.push_back(std::move(images));
  }
  return index;
}

// ---------------------------------------------------------------------------

namespace {

std::vector<Sample> to_samples(const DatasetIndex& index, const std::vector<std::vector<std::string>>& parts) {
  std::vector<Sample> out;
  for (std::size_t c = 0; c < parts.size(); ++c) {
    for (const auto& f : parts[c]) out.push_back({index.root / index.classes[c] / f, static_cast<int>(c)});
  }
  return out;
}

}  // namespace

std::vector<Sample> SplitAssignment::train_samples(const DatasetIndex& index) const { return to_samples(index, train); }
std::vector<Sample> SplitAssignment::val_samples(const DatasetIndex& index) const { return to_samples(index, val); }

SplitAssignment split_dataset(const DatasetIndex& index, double train_fraction, std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw ParameterError("split: train_fraction must be in (0,1)");
  SplitAssignment split;
  split.seed = seed;
  for (std::size_t c = 0; c < index.num_classes(); ++c) {
    std::vector<std::string> files = index.files[c];
    const std::size_t n = files.size();
    if (n < 2) throw SplitError("class '" + index.classes[c] + "' has fewer than 2 images");
    Prng rng(seed ^ static_cast<std::uint64_t>(c));
    for (std::size_t i = n - 1; i > 0; --i) std::swap(files[i], files[rng.below(i + 1)]);
    // The 1e-9 guards floor against a product like 6.9999999 for 0.7 * 10.
    auto n_train = static_cast<std::size_t>(std::floor(train_fraction * static_cast<double>(n) + 1e-9));
    n_train = std::min(n_train, n - 1);
    split.train.emplace_back(files.begin(), files.begin() + static_cast<std::ptrdiff_t>(n_train));
    split.val.emplace_back(files.begin() + static_cast<std::ptrdiff_t>(n_train), files.end());
  }
  return split;
}

// ---------------------------------------------------------------------------

void PreprocessConfig::validate() const {
  if (target_size < 33) throw ParameterError("preprocess: target_size must be >= 33");
  for (float s : channel_stds) {
    if (!(s > 0.0f)) throw ParameterError("preprocess: channel stds must be positive");
  }
  if (!(hflip_probability >= 0.0f && hflip_probability <= 1.0f)) {
    throw ParameterError("preprocess: hflip_probability must be in [0,1]");
  }
}

namespace {

void require_image(const Tensor& img, const char* op) {
  if (img.rank() != 3 || img.dim(0) != 3) {
    throw DimensionError(std::string(op) + ": expected [3,H,W], got " + shape_to_string(img.shape()));
  }
}

struct AxisSample {
  std::int64_t i0, i1;
  float frac;
};

std::vector<AxisSample> axis_samples(std::int64_t src, std::int64_t dst) {
  std::vector<AxisSample> out(static_cast<std::size_t>(dst));
  const float scale = static_cast<float>(src) / static_cast<float>(dst);
  const float last = static_cast<float>(src - 1);
  for (std::int64_t d = 0; d < dst; ++d) {
    float s = (static_cast<float>(d) + 0.5f) * scale - 0.5f;
    if (s < 0.0f) s = 0.0f;
    if (s > last) s = last;
    const auto i0 = static_cast<std::int64_t>(std::floor(s));
    out[static_cast<std::size_t>(d)] = {i0, std::min(i0 + 1, src - 1), s - static_cast<float>(i0)};
  }
  return out;
}

}  // namespace

Tensor resize_bilinear(const Tensor& img, int target) {
  require_image(img, "resize_bilinear");
  if (target < 1) throw ParameterError("resize_bilinear: target must be >= 1");
  const std::int64_t h = img.dim(1), w = img.dim(2);
  const auto ys = axis_samples(h, target);
  const auto xs = axis_samples(w, target);
  Tensor out = Tensor::zeros({3, target, target});
  const float* src = img.data().data();
  float* dst = out.data().data();
  for (std::int64_t c = 0; c < 3; ++c) {
    const float* plane = src + c * h * w;
    for (std::int64_t y = 0; y < target; ++y) {
      const auto& sy = ys[static_cast<std::size_t>(y)];
      const float* r0 = plane + sy.i0 * w;
      const float* r1 = plane + sy.i1 * w;
      for (std::int64_t x = 0; x < target; ++x) {
        const auto& sx = xs[static_cast<std::size_t>(x)];
        const float top = r0[sx.i0] * (1.0f - sx.frac) + r0[sx.i1] * sx.frac;
        const float bottom = r1[sx.i0] * (1.0f - sx.frac) + r1[sx.i1] * sx.frac;
        dst[(c * target + y) * target + x] = top * (1.0f - sy.frac) + bottom * sy.frac;
      }
    }
  }
  return out;
}

Tensor normalize(const Tensor& img, const PreprocessConfig& cfg) {
  require_image(img, "normalize");
  Tensor out = Tensor::zeros(img.shape());
  const auto plane = img.dim(1) * img.dim(2);
  for (std::int64_t c = 0; c < 3; ++c) {
    const float mean = cfg.channel_means[static_cast<std::size_t>(c)];
    const float sd = cfg.channel_stds[static_cast<std::size_t>(c)];
    for (std::int64_t i = 0; i < plane; ++i) {
      out.data()[c * plane + i] = (img.data()[c * plane + i] / 255.0f - mean) / sd;
    }
  }
  return out;
}

Tensor denormalize(const Tensor& img, const PreprocessConfig& cfg) {
  require_image(img, "denormalize");
  Tensor out = Tensor::zeros(img.shape());
  const auto plane = img.dim(1) * img.dim(2);
  for (std::int64_t c = 0; c < 3; ++c) {
    const float mean = cfg.channel_means[static_cast<std::size_t>(c)];
    const float sd = cfg.channel_stds[static_cast<std::size_t>(c)];
    for (std::int64_t i = 0; i < plane; ++i) {
      out.data()[c * plane + i] = (img.data()[c * plane + i] * sd + mean) * 255.0f;
    }
  }
  return out;
}

Tensor random_hflip(const Tensor& img, Prng& rng, float p) {
  require_image(img, "random_hflip");
  if (!(p >= 0.0f && p <= 1.0f)) throw ParameterError("random_hflip: p must be in [0,1]");
  const bool flip = rng.uniform() < p;
  Tensor out = img.clone();
  out.set_requires_grad(false);
  if (!flip) return out;
  const std::int64_t rows = img.dim(0) * img.dim(1), w = img.dim(2);
  auto d = out.data();
  for (std::int64_t r = 0; r < rows; ++r) std::reverse(d.begin() + r * w, d.begin() + (r + 1) * w);
  return out;
}

Tensor load_sample(const fs::path& path, const PreprocessConfig& cfg, Prng* flip_rng) {
  Tensor img = resize_bilinear(decode_image(path), cfg.target_size);
  if (flip_rng != nullptr) img = random_hflip(img, *flip_rng, cfg.hflip_probability);
  return normalize(img, cfg);
}

Tensor make_batch(std::span<const Sample> samples, const PreprocessConfig& cfg, Prng* flip_rng) {
  if (samples.empty()) throw ContractError("make_batch: no samples");
  const std::int64_t s = cfg.target_size;
  const std::int64_t per = 3 * s * s;
  Tensor batch = Tensor::zeros({static_cast<std::int64_t>(samples.size()), 3, s, s});
  for (std::size_t i = 0; i < samples.size(); ++i) {
    Tensor img = load_sample(samples[i].path, cfg, flip_rng);
    std::copy(img.data().begin(), img.data().end(), batch.data().begin() + static_cast<std::ptrdiff_t>(i) * per);
  }
  return batch;
}

// ---------------------------------------------------------------------------

std::vector<HistogramRow> class_histogram(const DatasetIndex& index) {
  std::vector<HistogramRow> rows;
  for (std::size_t c = 0; c < index.num_classes(); ++c) rows.push_back({index.classes[c], index.files[c].size()});
  return rows;
}

std::string histogram_csv(std::span<const HistogramRow> rows) {
  std::ostringstream out;
  out << "class,count\n";
  for (const auto& r : rows) out << r.class_name << ',' << r.count << '\n';
  return out.str();
}

void write_histogram_csv(const fs::path& path, std::span<const HistogramRow> rows) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << histogram_csv(rows);
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace maskface
