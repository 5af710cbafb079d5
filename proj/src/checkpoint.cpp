#include "maskface/checkpoint.hpp"

#include <zlib.h>

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <set>

#include "maskface/errors.hpp"

namespace maskface {

namespace {

using Kind = FormatError::Kind;

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t crc32_of(std::span<const std::uint8_t> bytes) {
  return static_cast<std::uint32_t>(::crc32(0L, bytes.data(), static_cast<uInt>(bytes.size())));
}

class Reader {
 public:
  Reader(std::span<const std::uint8_t> bytes, std::size_t begin) : bytes_(bytes), pos_(begin) {}

  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }

  std::span<const std::uint8_t> take(std::size_t n, const char* what) {
    need(n, what);
    auto s = bytes_.subspan(pos_, n);
    pos_ += n;
    return s;
  }

  std::size_t pos() const { return pos_; }

 private:
  void need(std::size_t n, const char* what) {
    if (bytes_.size() - pos_ < n) {
      throw FormatError(Kind::kTruncated, std::string("checkpoint truncated while reading ") + what,
                        static_cast<std::int64_t>(pos_));
    }
  }

  std::span<const std::uint8_t> bytes_;
  std::size_t pos_;
};

bool is_head(const std::string& name) { return name.rfind("fc.", 0) == 0; }

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(std::span<const NamedTensor> tensors) {
  std::set<std::string> seen;
  std::vector<std::uint8_t> out(std::begin(kCheckpointMagic), std::end(kCheckpointMagic));
  put_u32(out, kCheckpointVersion);
  put_u32(out, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& nt : tensors) {
    if (!seen.insert(nt.name).second) throw ContractError("checkpoint: duplicate tensor name '" + nt.name + "'");
    put_u32(out, static_cast<std::uint32_t>(nt.name.size()));
    out.insert(out.end(), nt.name.begin(), nt.name.end());
    const auto& shape = nt.tensor.shape();
    put_u32(out, static_cast<std::uint32_t>(shape.size()));
    for (auto d : shape) put_u32(out, static_cast<std::uint32_t>(d));
    const auto data = nt.tensor.data();
    const auto* raw = reinterpret_cast<const std::uint8_t*>(data.data());
    out.insert(out.end(), raw, raw + data.size_bytes());
  }
  put_u32(out, crc32_of(out));
  return out;
}

std::vector<NamedTensor> decode_checkpoint(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 16) throw FormatError(Kind::kTruncated, "checkpoint shorter than its fixed header", 0);
  if (std::memcmp(bytes.data(), kCheckpointMagic, 4) != 0) {
    throw FormatError(Kind::kBadMagic, "checkpoint magic is not RSN5", 0);
  }
  const auto body = bytes.first(bytes.size() - 4);
  const std::uint32_t stored = Reader(bytes, bytes.size() - 4).u32("crc");
  if (crc32_of(body) != stored) {
    throw FormatError(Kind::kCrcMismatch, "checkpoint CRC mismatch", static_cast<std::int64_t>(bytes.size() - 4));
  }

  Reader r(body, 4);
  const std::uint32_t version = r.u32("version");
  if (version != kCheckpointVersion) {
    throw FormatError(Kind::kBadVersion, "checkpoint version " + std::to_string(version) + " is not supported", 4);
  }
  const std::uint32_t count = r.u32("tensor count");
  std::vector<NamedTensor> out;
  std::set<std::string> seen;
  for (std::uint32_t t = 0; t < count; ++t) {
    const std::uint32_t name_len = r.u32("name length");
    auto name_bytes = r.take(name_len, "name");
    std::string name(name_bytes.begin(), name_bytes.end());
    if (!seen.insert(name).second) {
      throw FormatError(Kind::kBadHeader, "checkpoint: duplicate tensor '" + name + "'", static_cast<std::int64_t>(r.pos()));
    }
    const std::uint32_t rank = r.u32("rank");
    if (rank > 8) throw FormatError(Kind::kBadHeader, "checkpoint: rank too large for '" + name + "'", static_cast<std::int64_t>(r.pos()));
    Shape shape;
    std::uint64_t numel = 1;
    for (std::uint32_t i = 0; i < rank; ++i) {
      const auto d = r.u32("dims");
      if (d == 0) throw FormatError(Kind::kBadHeader, "checkpoint: zero dimension in '" + name + "'", static_cast<std::int64_t>(r.pos()));
      shape.push_back(d);
      numel *= d;
      if (numel > body.size()) {
        throw FormatError(Kind::kTruncated, "checkpoint: payload of '" + name + "' exceeds file",
                          static_cast<std::int64_t>(r.pos()));
      }
    }
    auto payload = r.take(numel * 4, "payload");
    std::vector<float> data(numel);
    std::memcpy(data.data(), payload.data(), payload.size());
    out.push_back({std::move(name), Tensor::from_data(std::move(shape), std::move(data))});
  }
  if (r.pos() != body.size()) {
    throw FormatError(Kind::kBadHeader, "checkpoint: trailing bytes after last tensor", static_cast<std::int64_t>(r.pos()));
  }
  return out;
}

void save_tensors(const std::filesystem::path& path, std::span<const NamedTensor> tensors) {
  const auto bytes = encode_checkpoint(tensors);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open checkpoint for writing: " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("checkpoint write failed: " + path.string());
}

void save_checkpoint(const Resnet50Model& model, const std::filesystem::path& path) {
  save_tensors(path, model.state());
}

TensorMap load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint: " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  TensorMap map;
  for (auto& nt : decode_checkpoint(bytes)) map.emplace(std::move(nt.name), std::move(nt.tensor));
  return map;
}

// ---------------------------------------------------------------------------

namespace {

void copy_into(Tensor& dst, const Tensor& src) { std::copy(src.data().begin(), src.data().end(), dst.data().begin()); }

const Tensor* find_matching(const TensorMap& map, const NamedTensor& target, std::string* problem) {
  auto it = map.find(target.name);
  if (it == map.end()) {
    *problem = "missing tensor '" + target.name + "'";
    return nullptr;
  }
  if (it->second.shape() != target.tensor.shape()) {
    *problem = "shape mismatch for '" + target.name + "': expected " + shape_to_string(target.tensor.shape()) +
               ", found " + shape_to_string(it->second.shape());
    return nullptr;
  }
  return &it->second;
}

}  // namespace

LoadReport adapt_head(Resnet50Model& model, const TensorMap& pretrained, int num_classes, float dropout_p,
                      std::uint64_t init_seed) {
  std::vector<std::pair<NamedTensor, const Tensor*>> plan;
  for (auto& nt : model.state()) {
    if (is_head(nt.name)) continue;
    std::string problem;
    const Tensor* src = find_matching(pretrained, nt, &problem);
    if (src == nullptr) throw LoadError("adapt_head: " + problem);
    plan.emplace_back(std::move(nt), src);
  }
  if (num_classes < 2) throw ParameterError("adapt_head: num_classes must be >= 2");
  if (!(dropout_p >= 0.0f && dropout_p < 1.0f)) throw ParameterError("adapt_head: dropout must be in [0,1)");

  LoadReport report;
  for (auto& [nt, src] : plan) {
    copy_into(nt.tensor, *src);
    report.loaded.push_back(nt.name);
  }

  model.replace_head(num_classes, dropout_p, init_seed);
  const Shape weight_shape = {num_classes, Resnet50Model::kFeatureChannels};
  const Shape bias_shape = {num_classes};
  auto w = pretrained.find("fc.weight");
  auto b = pretrained.find("fc.bias");
  const bool head_matches = w != pretrained.end() && b != pretrained.end() && w->second.shape() == weight_shape &&
                            b->second.shape() == bias_shape;
  for (auto& nt : model.state()) {
    if (!is_head(nt.name)) continue;
    if (head_matches) {
      copy_into(nt.tensor, pretrained.at(nt.name));
      report.loaded.push_back(nt.name);
    } else {
      report.reinitialized.push_back(nt.name);
    }
  }
  const auto state = model.state();
  for (const auto& [name, tensor] : pretrained) {
    const bool used = std::any_of(state.begin(), state.end(), [&](const NamedTensor& nt) { return nt.name == name; }) &&
                      (!is_head(name) || head_matches);
    if (!used) report.ignored.push_back(name);
  }
  return report;
}

void load_state(Resnet50Model& model, const TensorMap& tensors) {
  std::vector<std::pair<NamedTensor, const Tensor*>> plan;
  for (auto& nt : model.state()) {
    std::string problem;
    const Tensor* src = find_matching(tensors, nt, &problem);
    if (src == nullptr) throw LoadError("load_state: " + problem);
    plan.emplace_back(std::move(nt), src);
  }
  for (auto& [nt, src] : plan) copy_into(nt.tensor, *src);
}

Resnet50Model model_from_checkpoint(const TensorMap& tensors, float dropout_p) {
  auto it = tensors.find("fc.weight");
  if (it == tensors.end() || it->second.rank() != 2) throw LoadError("checkpoint has no 2-D fc.weight");
  Resnet50Model model(static_cast<int>(it->second.dim(0)), dropout_p, 0);
  load_state(model, tensors);
  return model;
}

}  // namespace maskface
