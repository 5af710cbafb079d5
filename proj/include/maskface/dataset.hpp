#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "maskface/prng.hpp"
#include "maskface/tensor.hpp"

namespace maskface {

/// Class-per-directory corpus: root/<class>/<image>. Classes are sorted
/// lexicographically and indexed 0..K-1 in that order; files within a class
/// are sorted too.
struct DatasetIndex {
  std::filesystem::path root;
  std::vector<std::string> classes;
  std::vector<std::vector<std::string>> files;

  std::size_t num_classes() const noexcept { return classes.size(); }
  std::size_t total_files() const;
  /// Throws IndexError for unknown names.
  int class_index(const std::string& name) const;
  std::filesystem::path file_path(std::size_t cls, std::size_t i) const;
};

/// True for extensions scan_dataset counts as images (ppm, png, jpg, jpeg).
bool is_image_file(const std::filesystem::path& path);

/// Lists root/<class>/ images and drops classes with fewer than min_count.
DatasetIndex scan_dataset(const std::filesystem::path& root, int min_count = 8);

struct Sample {
  std::filesystem::path path;
  int label = 0;
};

/// Per-class train/validation partition.
struct SplitAssignment {
  std::uint64_t seed = 0;
  std::vector<std::vector<std::string>> train;
  std::vector<std::vector<std::string>> val;

  std::vector<Sample> train_samples(const DatasetIndex& index) const;
  std::vector<Sample> val_samples(const DatasetIndex& index) const;
};

/// Shuffles each class with Prng(seed ^ class_index) and sends the first
/// floor(train_fraction * n) files to train, the rest to validation.
SplitAssignment split_dataset(const DatasetIndex& index, double train_fraction, std::uint64_t seed);

struct PreprocessConfig {
  int target_size = 180;
  std::array<float, 3> channel_means = {0.485f, 0.456f, 0.406f};
  std::array<float, 3> channel_stds = {0.229f, 0.224f, 0.225f};
  float hflip_probability = 0.5f;

  void validate() const;
};

/// Parses binary PPM (P6, maxval 255) into a [3,H,W] tensor of 0..255 values.
Tensor decode_ppm(std::span<const std::uint8_t> bytes);
/// Loads PPM, or PNG/JPEG when built with those decoders, as [3,H,W] RGB 0..255.
Tensor decode_image(const std::filesystem::path& path);
/// Writes a [3,H,W] tensor (values rounded and clamped to 0..255) as P6.
void write_ppm(const std::filesystem::path& path, const Tensor& img);

/// Bilinear resize to [3,target,target] with half-pixel centers: the source
/// coordinate of destination index d is (d + 0.5) * (src / dst) - 0.5,
/// clamped to [0, src - 1].
Tensor resize_bilinear(const Tensor& img, int target);

/// (v / 255 - mean_c) / std_c per channel.
Tensor normalize(const Tensor& img, const PreprocessConfig& cfg);
Tensor denormalize(const Tensor& img, const PreprocessConfig& cfg);

/// Reverses the W axis with probability p. Always consumes one draw.
Tensor random_hflip(const Tensor& img, Prng& rng, float p);

/// decode -> resize -> optional flip -> normalize. `flip_rng` null disables
/// augmentation.
Tensor load_sample(const std::filesystem::path& path, const PreprocessConfig& cfg, Prng* flip_rng);

/// Stacks preprocessed samples into an (N,3,S,S) batch. Flip draws are
/// taken from `flip_rng` in sample order.
Tensor make_batch(std::span<const Sample> samples, const PreprocessConfig& cfg, Prng* flip_rng);

struct HistogramRow {
  std::string class_name;
  std::size_t count = 0;
};

std::vector<HistogramRow> class_histogram(const DatasetIndex& index);
/// `class,count` header then one LF-terminated row per class.
std::string histogram_csv(std::span<const HistogramRow> rows);
void write_histogram_csv(const std::filesystem::path& path, std::span<const HistogramRow> rows);

}  // namespace maskface
