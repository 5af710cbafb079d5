#pragma once

#include <algorithm>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include <unistd.h>

#include "maskface/checkpoint.hpp"
#include "maskface/dataset.hpp"
#include "maskface/prng.hpp"
#include "maskface/tensor.hpp"

namespace testutil {

namespace fs = std::filesystem;

inline fs::path fixture(const std::string& name) { return fs::path(MASKFACE_FIXTURES) / name; }

class TempDir {
 public:
  TempDir() {
    static int counter = 0;
    path_ = fs::temp_directory_path() /
            ("maskface_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& name) const { return path_ / name; }

 private:
  fs::path path_;
};

inline void write_bytes(const fs::path& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

inline std::vector<std::uint8_t> read_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline std::vector<std::uint8_t> ppm_bytes(int w, int h, const std::vector<std::uint8_t>& rgb) {
  const std::string header = "P6\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.insert(out.end(), rgb.begin(), rgb.end());
  return out;
}

inline maskface::Tensor random_tensor(maskface::Shape shape, maskface::Prng& rng, float lo = -1.0f, float hi = 1.0f) {
  maskface::Tensor t = maskface::Tensor::zeros(std::move(shape));
  for (auto& v : t.data()) v = lo + (hi - lo) * rng.uniform();
  return t;
}

/// root/<class>/imgNN.ppm with `counts[i]` tiny images per class.
inline void make_class_tree(const fs::path& root, const std::vector<std::pair<std::string, int>>& counts,
                            int size = 4) {
  for (const auto& [name, n] : counts) {
    fs::create_directories(root / name);
    for (int i = 0; i < n; ++i) {
      std::vector<std::uint8_t> rgb(static_cast<std::size_t>(size * size * 3), static_cast<std::uint8_t>(10 * i));
      char file[32];
      std::snprintf(file, sizeof file, "img%02d.ppm", i);
      write_bytes(root / name / file, ppm_bytes(size, size, rgb));
    }
  }
}

/// Five classes of 64x64 PPMs, each class a distinct base colour with
/// per-pixel noise.
inline void make_color_classes(const fs::path& root, int per_class = 10, int size = 64, std::uint64_t seed = 42) {
  static const float base[5][3] = {{220, 40, 40}, {40, 200, 60}, {50, 60, 220}, {230, 210, 40}, {150, 60, 200}};
  maskface::Prng rng(seed);
  for (int c = 0; c < 5; ++c) {
    const fs::path dir = root / ("class" + std::to_string(c));
    fs::create_directories(dir);
    for (int i = 0; i < per_class; ++i) {
      std::vector<std::uint8_t> rgb(static_cast<std::size_t>(size * size * 3));
      for (std::size_t p = 0; p < rgb.size(); ++p) {
        const float v = base[c][p % 3] + 40.0f * (rng.uniform() - 0.5f);
        rgb[p] = static_cast<std::uint8_t>(std::clamp(v, 0.0f, 255.0f));
      }
      char file[32];
      std::snprintf(file, sizeof file, "img%02d.ppm", i);
      write_bytes(dir / file, ppm_bytes(size, size, rgb));
    }
  }
}

}  // namespace testutil
