#include "mpfl/artifact.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace mpfl {

namespace {

constexpr char kMagic[4] = {'M', 'P', 'F', 'M'};

void put_u32(Bytes& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_f64(Bytes& out, double d) {
  const auto v = std::bit_cast<std::uint64_t>(d);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> in) : in_(in) {}

  std::span<const std::uint8_t> take(std::size_t n) {
    if (in_.size() - pos_ < n) throw ProtocolError("artifact truncated", pos_);
    auto s = in_.subspan(pos_, n);
    pos_ += n;
    return s;
  }
  std::uint8_t u8() { return take(1)[0]; }
  std::uint32_t u32() {
    auto s = take(4);
    return static_cast<std::uint32_t>(s[0]) | static_cast<std::uint32_t>(s[1]) << 8 |
           static_cast<std::uint32_t>(s[2]) << 16 | static_cast<std::uint32_t>(s[3]) << 24;
  }
  double f64() {
    auto s = take(8);
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = v << 8 | s[i];
    return std::bit_cast<double>(v);
  }
  std::size_t pos() const { return pos_; }
  bool done() const { return pos_ == in_.size(); }

 private:
  std::span<const std::uint8_t> in_;
  std::size_t pos_ = 0;
};

}  // namespace

Bytes encode_artifact(const Model& model, const PruneMask& mask) {
  if (!mask.matches(model.arch())) throw ConfigError("artifact: mask does not match model");
  Bytes out(kMagic, kMagic + 4);
  put_u32(out, kArtifactVersion);
  const auto dense = model.arch().dense_layers();
  put_u32(out, static_cast<std::uint32_t>(dense.size()));
  for (const auto& l : dense) {
    put_u32(out, static_cast<std::uint32_t>(l.in_dim));
    put_u32(out, static_cast<std::uint32_t>(l.out_dim));
    out.push_back(l.prunable ? 1 : 0);
  }
  const auto flat = model.flat();
  for (Eigen::Index i = 0; i < flat.size(); ++i) put_f64(out, flat(i));
  const Bytes packed = encode_mask(mask);
  put_u32(out, static_cast<std::uint32_t>(packed.size()));
  out.insert(out.end(), packed.begin(), packed.end());
  return out;
}

ModelArtifact decode_artifact(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  auto magic = r.take(4);
  if (std::memcmp(magic.data(), kMagic, 4) != 0) throw ProtocolError("artifact: bad magic", 0);
  if (r.u32() != kArtifactVersion) throw ProtocolError("artifact: unsupported version", 4);
  const auto count = r.u32();
  if (count == 0 || count > 4096) throw ProtocolError("artifact: bad layer count", 8);
  std::vector<LayerSpec> layers;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto in = r.u32();
    const auto out = r.u32();
    const auto prunable = r.u8();
    if (prunable > 1) throw ProtocolError("artifact: bad prunable flag", r.pos() - 1);
    layers.push_back(LayerSpec::dense(in, out, prunable == 1));
    if (i + 1 < count) layers.push_back(LayerSpec::relu(out));
  }
  ArchSpec arch;
  try {
    arch = ArchSpec(std::move(layers));
  } catch (const ConfigError& e) {
    throw ProtocolError(std::string("artifact: ") + e.what(), r.pos());
  }
  ModelArtifact a{Model(arch), PruneMask::all_ones(arch)};
  Eigen::VectorXd flat(static_cast<Eigen::Index>(arch.parameter_count()));
  if ((bytes.size() - r.pos()) / 8 < arch.parameter_count()) throw ProtocolError("artifact truncated", r.pos());
  for (Eigen::Index i = 0; i < flat.size(); ++i) flat(i) = r.f64();
  a.model.set_flat(flat);
  const auto mask_len = r.u32();
  const auto at = r.pos();
  try {
    a.mask = decode_mask(r.take(mask_len), arch);
  } catch (const ProtocolError& e) {
    throw ProtocolError("artifact mask: " + e.reason(), at + e.offset());
  }
  if (!r.done()) throw ProtocolError("artifact: trailing bytes", r.pos());
  return a;
}

void write_artifact(const std::filesystem::path& path, const Model& model, const PruneMask& mask) {
  const Bytes b = encode_artifact(model, mask);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("artifact: cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(b.data()), static_cast<std::streamsize>(b.size()));
  if (!out) throw ConfigError("artifact: write failed for " + path.string());
}

ModelArtifact read_artifact(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("artifact: cannot open " + path.string());
  const Bytes b((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_artifact(b);
}

}  // namespace mpfl
