#pragma once

// The .cngp container. All integers are little-endian; floats are IEEE
// binary16. Layout:
//
//   header (40 bytes, see ModelHeader)
//   for each level l = 0 .. L-1:
//     feature block   N_f * F halves, row-major
//     index block     ceil(N_c * log2(N_p) / 8) bytes, hashed probed levels only,
//                     entries packed LSB-first (entry 0 in bit 0 of byte 0)
//   for each MLP layer: weights (out x in, row-major) then biases, as halves
//
// The layout is fixed by the header alone, so any table row can be located
// without decoding the rest of the file.

#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <span>
#include <string>
#include <vector>

#include "cngp/error.hpp"
#include "cngp/grid.hpp"
#include "cngp/hyperparams.hpp"
#include "cngp/model.hpp"

namespace cngp {

inline constexpr std::array<std::uint8_t, 4> kMagic{'C', 'N', 'G', 'P'};
inline constexpr std::uint16_t kFormatVersion = 1;
inline constexpr std::size_t kHeaderBytes = 40;
inline constexpr std::uint16_t kFlagSigmoidOutput = 1u << 0;
inline constexpr std::uint16_t kFlagProbingDisabled = 1u << 1;
inline constexpr std::uint32_t kMaxImageSide = 1u << 20;

struct LevelSize {
  LevelSpec spec;
  std::uint64_t feature_bytes = 0;
  std::uint64_t index_bytes = 0;
};

struct SizeReport {
  std::uint64_t header = kHeaderBytes;
  std::uint64_t features = 0;
  std::uint64_t indices = 0;
  std::uint64_t mlp = 0;
  std::vector<LevelSize> levels;

  std::uint64_t payload() const noexcept { return features + indices + mlp; }
  std::uint64_t total() const noexcept { return header + payload(); }
};

inline std::uint64_t index_block_bytes(std::uint32_t n_c, std::uint32_t n_p) noexcept {
  const std::uint64_t bits = static_cast<std::uint64_t>(n_c) * log2_exact(n_p);
  return (bits + 7) / 8;
}

/// Exact byte counts of the file a model with these hyperparameters produces.
inline SizeReport size_report(const HyperParams& hp) {
  hp.validate();
  SizeReport report;
  for (const LevelSpec& spec : make_level_specs(hp.levels, hp.n_min, hp.n_max, hp.n_f, 2)) {
    LevelSize level{spec, static_cast<std::uint64_t>(hp.n_f) * hp.features * 2, 0};
    if (spec.mode == IndexMode::Hashed && hp.probing_active()) level.index_bytes = index_block_bytes(hp.n_c, hp.n_p);
    report.features += level.feature_bytes;
    report.indices += level.index_bytes;
    report.levels.push_back(level);
  }
  report.mlp = mlp_param_count(layer_widths(hp)) * 2;
  return report;
}

struct ModelHeader {
  std::uint16_t version = kFormatVersion;
  std::uint16_t flags = 0;
  std::uint8_t dims = 2;
  std::uint8_t levels = 0;
  std::uint8_t features = 0;
  std::uint8_t log2_nf = 0;
  std::uint8_t log2_nc = 0;
  std::uint8_t log2_np = 0;
  std::uint8_t hidden_layers = 0;
  std::uint8_t outputs = 3;
  std::uint16_t neurons = 0;
  std::uint16_t reserved = 0;
  std::uint32_t n_min = 0;
  std::uint32_t n_max = 0;
  std::uint32_t width = 0;
  std::uint32_t height = 0;
  std::uint32_t payload_bytes = 0;

  HyperParams hyperparams() const {
    HyperParams hp;
    hp.n_f = 1u << log2_nf;
    hp.n_c = 1u << log2_nc;
    hp.n_p = 1u << log2_np;
    hp.features = features;
    hp.levels = levels;
    hp.n_min = n_min;
    hp.n_max = n_max;
    hp.neurons = neurons;
    hp.hidden_layers = hidden_layers;
    hp.probing = (flags & kFlagProbingDisabled) ? Probing::Disabled : Probing::Learned;
    return hp;
  }
};

namespace detail {

class ByteWriter {
 public:
  void u8(std::uint8_t v) { bytes_.push_back(v); }
  void u16(std::uint16_t v) {
    u8(static_cast<std::uint8_t>(v & 0xff));
    u8(static_cast<std::uint8_t>(v >> 8));
  }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) u8(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
  }
  void half(float v) {
    const std::uint16_t bits = float_to_half_bits(v);
    require((bits & 0x7c00u) != 0x7c00u, ErrorCode::invariant_violation,
            "parameter " + std::to_string(v) + " is not representable as a finite half");
    u16(bits);
  }
  std::vector<std::uint8_t>& bytes() noexcept { return bytes_; }

 private:
  std::vector<std::uint8_t> bytes_;
};

class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::size_t remaining() const noexcept { return bytes_.size() - pos_; }
  std::size_t position() const noexcept { return pos_; }

  void need(std::size_t n, const char* what) const {
    if (remaining() < n) {
      fail(ErrorCode::truncated_file, std::string("file ends inside ") + what + " (offset " + std::to_string(pos_) +
                                          ", need " + std::to_string(n) + " bytes, have " +
                                          std::to_string(remaining()) + ")");
    }
  }
  std::uint8_t u8() { return bytes_[pos_++]; }
  std::uint16_t u16() {
    const std::uint16_t v = static_cast<std::uint16_t>(bytes_[pos_] | (bytes_[pos_ + 1] << 8));
    pos_ += 2;
    return v;
  }
  std::uint32_t u32() {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }
  float half() {
    const std::uint16_t bits = u16();
    require((bits & 0x7c00u) != 0x7c00u, ErrorCode::invariant_violation,
            "non-finite half at offset " + std::to_string(pos_ - 2));
    return half_bits_to_float(bits);
  }
  std::span<const std::uint8_t> take(std::size_t n) {
    auto out = bytes_.subspan(pos_, n);
    pos_ += n;
    return out;
  }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

inline void write_header(ByteWriter& w, const ModelHeader& h) {
  for (const std::uint8_t b : kMagic) w.u8(b);
  w.u16(h.version);
  w.u16(h.flags);
  w.u8(h.dims);
  w.u8(h.levels);
  w.u8(h.features);
  w.u8(h.log2_nf);
  w.u8(h.log2_nc);
  w.u8(h.log2_np);
  w.u8(h.hidden_layers);
  w.u8(h.outputs);
  w.u16(h.neurons);
  w.u16(h.reserved);
  w.u32(h.n_min);
  w.u32(h.n_max);
  w.u32(h.width);
  w.u32(h.height);
  w.u32(h.payload_bytes);
}

}  // namespace detail

/// Parses and validates the fixed-size header. Rejects anything the body
/// parser could not honor, including payload sizes that disagree with the
/// closed-form size model.
inline ModelHeader decode_header(std::span<const std::uint8_t> bytes) {
  detail::ByteReader r(bytes);
  r.need(kMagic.size(), "magic");
  for (const std::uint8_t b : kMagic) {
    if (r.u8() != b) fail(ErrorCode::bad_magic, "not a .cngp model (magic mismatch)");
  }
  r.need(kHeaderBytes - kMagic.size(), "header");
  ModelHeader h;
  h.version = r.u16();
  if (h.version != kFormatVersion) {
    fail(ErrorCode::version_mismatch,
         "format version " + std::to_string(h.version) + ", expected " + std::to_string(kFormatVersion));
  }
  h.flags = r.u16();
  h.dims = r.u8();
  h.levels = r.u8();
  h.features = r.u8();
  h.log2_nf = r.u8();
  h.log2_nc = r.u8();
  h.log2_np = r.u8();
  h.hidden_layers = r.u8();
  h.outputs = r.u8();
  h.neurons = r.u16();
  h.reserved = r.u16();
  h.n_min = r.u32();
  h.n_max = r.u32();
  h.width = r.u32();
  h.height = r.u32();
  h.payload_bytes = r.u32();

  auto check = [](bool ok, const std::string& msg) { require(ok, ErrorCode::invariant_violation, msg); };
  check((h.flags & ~(kFlagSigmoidOutput | kFlagProbingDisabled)) == 0, "unknown flag bits");
  check(h.dims == 2, "only 2D models are supported");
  check(h.outputs == 3, "only RGB models are supported");
  check(h.reserved == 0, "reserved header field is nonzero");
  check(h.log2_nf <= 24 && h.log2_nc <= 24, "codebook size exponent above 24");
  check(h.log2_np <= 4, "probing range above 2^4");
  check(h.log2_np <= h.log2_nf, "N_p does not divide N_f");
  check(!(h.flags & kFlagProbingDisabled) || h.log2_np == 0, "probing disabled but N_p > 1");
  check(h.levels >= 1 && h.levels <= 32, "level count outside [1, 32]");
  check(h.features >= 1 && h.features <= 8, "features per level outside [1, 8]");
  check(h.neurons >= 1 && h.neurons <= 1024, "hidden width outside [1, 1024]");
  check(h.hidden_layers <= 8, "more than 8 hidden layers");
  check(h.n_min >= 1 && h.n_max >= h.n_min && h.n_max <= (1u << 20), "invalid resolution range");
  check(h.width >= 1 && h.height >= 1 && h.width <= kMaxImageSide && h.height <= kMaxImageSide,
        "invalid image dimensions");
  const SizeReport sizes = size_report(h.hyperparams());
  check(sizes.payload() == h.payload_bytes, "declared payload " + std::to_string(h.payload_bytes) +
                                                " bytes differs from the size model (" +
                                                std::to_string(sizes.payload()) + ")");
  return h;
}

/// Reads exactly kHeaderBytes from `in`; never touches the codebooks.
inline ModelHeader read_header(std::istream& in) {
  std::array<std::uint8_t, kHeaderBytes> buffer{};
  in.read(reinterpret_cast<char*>(buffer.data()), static_cast<std::streamsize>(buffer.size()));
  const auto got = static_cast<std::size_t>(in.gcount());
  return decode_header(std::span<const std::uint8_t>(buffer.data(), got));
}

inline std::vector<std::uint8_t> serialize(const Model<float>& model) {
  const HyperParams& hp = model.hp;
  hp.validate();
  require(model.encoding.hyperparams() == hp, ErrorCode::invariant_violation, "encoding shape differs from hyperparameters");
  require(model.mlp.widths() == layer_widths(hp), ErrorCode::invariant_violation, "MLP shape differs from hyperparameters");
  require(model.width >= 1 && model.height >= 1 && model.width <= kMaxImageSide && model.height <= kMaxImageSide,
          ErrorCode::invariant_violation, "invalid image dimensions");
  require(model.encoding.baked_consistent(), ErrorCode::unbaked_model,
          "index codebooks are stale; bake before serializing");

  const SizeReport sizes = size_report(hp);
  require(sizes.payload() <= 0xffffffffull, ErrorCode::invariant_violation, "model payload exceeds 4 GiB");
  ModelHeader h;
  h.flags = static_cast<std::uint16_t>((model.mlp.sigmoid_output ? kFlagSigmoidOutput : 0) |
                                       (hp.probing_active() ? 0 : kFlagProbingDisabled));
  h.levels = static_cast<std::uint8_t>(hp.levels);
  h.features = static_cast<std::uint8_t>(hp.features);
  h.log2_nf = static_cast<std::uint8_t>(log2_exact(hp.n_f));
  h.log2_nc = static_cast<std::uint8_t>(log2_exact(hp.n_c));
  h.log2_np = static_cast<std::uint8_t>(log2_exact(hp.n_p));
  h.hidden_layers = static_cast<std::uint8_t>(hp.hidden_layers);
  h.neurons = static_cast<std::uint16_t>(hp.neurons);
  h.n_min = hp.n_min;
  h.n_max = hp.n_max;
  h.width = model.width;
  h.height = model.height;
  h.payload_bytes = static_cast<std::uint32_t>(sizes.payload());

  detail::ByteWriter w;
  w.bytes().reserve(sizes.total());
  detail::write_header(w, h);
  for (const auto& level : model.encoding.levels()) {
    for (const float v : level.features.table.values()) w.half(v);
    if (!level.probed) continue;
    const std::uint32_t bits = level.baked.bits_per_entry();
    std::vector<std::uint8_t> block(index_block_bytes(hp.n_c, hp.n_p), 0);
    for (std::uint64_t i = 0; i < level.baked.entries.size(); ++i) {
      const std::uint32_t entry = level.baked.entries[i];
      require(entry < hp.n_p, ErrorCode::invariant_violation, "baked index exceeds the probing range");
      for (std::uint32_t b = 0; b < bits; ++b) {
        if ((entry >> b) & 1u) {
          const std::uint64_t bit = i * bits + b;
          block[bit / 8] |= static_cast<std::uint8_t>(1u << (bit % 8));
        }
      }
    }
    for (const std::uint8_t byte : block) w.u8(byte);
  }
  for (std::size_t i = 0; i < model.mlp.layers(); ++i) {
    const auto& weights = model.mlp.weights[i];
    for (Eigen::Index o = 0; o < weights.rows(); ++o)
      for (Eigen::Index in = 0; in < weights.cols(); ++in) w.half(weights(o, in));
    for (Eigen::Index o = 0; o < model.mlp.biases[i].size(); ++o) w.half(model.mlp.biases[i](o));
  }
  require(w.bytes().size() == sizes.total(), ErrorCode::invariant_violation, "serialized size disagrees with size model");
  return std::move(w.bytes());
}

/// Reconstructs an inference-ready model (no confidence codebooks).
inline Model<float> deserialize(std::span<const std::uint8_t> bytes) {
  const ModelHeader h = decode_header(bytes);
  const std::uint64_t expected = kHeaderBytes + static_cast<std::uint64_t>(h.payload_bytes);
  if (bytes.size() < expected) {
    fail(ErrorCode::truncated_file,
         "file has " + std::to_string(bytes.size()) + " bytes, header declares " + std::to_string(expected));
  }
  require(bytes.size() == expected, ErrorCode::invariant_violation,
          std::to_string(bytes.size() - expected) + " trailing bytes after the model");

  Model<float> model;
  model.hp = h.hyperparams();
  model.width = h.width;
  model.height = h.height;
  model.encoding = HashGridEncoding<float, 2>(model.hp, 0, /*initialize=*/false);
  model.mlp = mlp_zeros<float>(layer_widths(model.hp));
  model.mlp.sigmoid_output = (h.flags & kFlagSigmoidOutput) != 0;

  detail::ByteReader r(bytes.subspan(kHeaderBytes));
  for (auto& level : model.encoding.levels()) {
    for (float& v : level.features.table.values()) v = r.half();
    if (!level.probed) continue;
    const std::uint32_t bits = log2_exact(model.hp.n_p);
    const auto block = r.take(index_block_bytes(model.hp.n_c, model.hp.n_p));
    for (std::uint64_t i = 0; i < level.baked.entries.size(); ++i) {
      std::uint32_t entry = 0;
      for (std::uint32_t b = 0; b < bits; ++b) {
        const std::uint64_t bit = i * bits + b;
        entry |= static_cast<std::uint32_t>((block[bit / 8] >> (bit % 8)) & 1u) << b;
      }
      require(entry < model.hp.n_p, ErrorCode::invariant_violation, "baked index exceeds the probing range");
      level.baked.entries[i] = static_cast<std::uint8_t>(entry);
    }
    const std::uint64_t used_bits = static_cast<std::uint64_t>(model.hp.n_c) * bits;
    if (used_bits % 8 != 0) {
      const std::uint8_t padding = static_cast<std::uint8_t>(block.back() >> (used_bits % 8));
      require(padding == 0, ErrorCode::invariant_violation, "nonzero padding bits in index block");
    }
  }
  for (std::size_t i = 0; i < model.mlp.layers(); ++i) {
    auto& weights = model.mlp.weights[i];
    for (Eigen::Index o = 0; o < weights.rows(); ++o)
      for (Eigen::Index in = 0; in < weights.cols(); ++in) weights(o, in) = r.half();
    for (Eigen::Index o = 0; o < model.mlp.biases[i].size(); ++o) model.mlp.biases[i](o) = r.half();
  }
  return model;
}

inline void write_model_file(const std::string& path, const Model<float>& model) {
  const auto bytes = serialize(model);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(static_cast<bool>(out), ErrorCode::io_error, "cannot create '" + path + "'");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  require(static_cast<bool>(out), ErrorCode::io_error, "failed writing '" + path + "'");
}

inline Model<float> read_model_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorCode::io_error, "cannot open '" + path + "'");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize(bytes);
}

}  // namespace cngp
