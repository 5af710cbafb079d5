#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "maskface/resnet50.hpp"

namespace maskface {

// Checkpoint layout, all integers little-endian:
//
//   "RSN5"                      4 bytes magic
//   version                     u32 (kCheckpointVersion)
//   tensor count                u32
//   per tensor:
//     name length               u32
//     name                      UTF-8, no terminator
//     rank                      u32
//     dims                      rank x u32
//     payload                   product(dims) x f32, row-major
//   crc32                       u32, IEEE CRC-32 of every preceding byte
inline constexpr char kCheckpointMagic[4] = {'R', 'S', 'N', '5'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

using TensorMap = std::map<std::string, Tensor>;

std::vector<std::uint8_t> encode_checkpoint(std::span<const NamedTensor> tensors);
/// Validates magic, CRC, version and structure, in that order.
std::vector<NamedTensor> decode_checkpoint(std::span<const std::uint8_t> bytes);

void save_tensors(const std::filesystem::path& path, std::span<const NamedTensor> tensors);
/// Parameters and batch-norm buffers in state order.
void save_checkpoint(const Resnet50Model& model, const std::filesystem::path& path);
TensorMap load_checkpoint(const std::filesystem::path& path);

struct LoadReport {
  std::vector<std::string> loaded;
  std::vector<std::string> reinitialized;
  std::vector<std::string> ignored;
};

/// Copies the backbone (everything but fc.*) from `pretrained` and installs
/// a head for `num_classes`. A pretrained head is reused only when its shape
/// matches; otherwise the head is freshly initialized from `init_seed`.
/// Nothing is modified if validation fails.
LoadReport adapt_head(Resnet50Model& model, const TensorMap& pretrained, int num_classes, float dropout_p,
                      std::uint64_t init_seed);

/// Strict load: every model tensor must be present with its exact shape.
void load_state(Resnet50Model& model, const TensorMap& tensors);

/// Builds a model whose head size is taken from fc.weight and loads it.
Resnet50Model model_from_checkpoint(const TensorMap& tensors, float dropout_p);

}  // namespace maskface
