#include "mpfl/wire.hpp"

#include <algorithm>
#include <bit>
#include <cstring>

namespace mpfl {

namespace {

void put_u32(Bytes& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(std::span<const std::uint8_t> in, std::size_t at) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= std::uint32_t{in[at + static_cast<std::size_t>(i)]} << (8 * i);
  return v;
}

std::size_t packed_size(std::size_t bits) { return (bits + 7) / 8; }

void pack_layer(Bytes& out, const LayerMask& bits) {
  const std::size_t base = out.size();
  out.resize(base + packed_size(static_cast<std::size_t>(bits.size())), 0);
  for (Eigen::Index l = 0; l < bits.size(); ++l)
    if (bits(l)) out[base + static_cast<std::size_t>(l) / 8] |= static_cast<std::uint8_t>(1u << (l % 8));
}

// Reads one layer at `at`; padding bits must be zero.
LayerMask unpack_layer(std::span<const std::uint8_t> in, std::size_t at, Eigen::Index groups) {
  LayerMask bits(groups);
  for (Eigen::Index l = 0; l < groups; ++l) bits(l) = (in[at + static_cast<std::size_t>(l) / 8] >> (l % 8)) & 1u;
  if (groups % 8 != 0) {
    const std::uint8_t last = in[at + static_cast<std::size_t>(groups) / 8];
    if (last >> (groups % 8)) throw ProtocolError("mask: non-zero padding bits", at + static_cast<std::size_t>(groups) / 8);
  }
  return bits;
}

void check_precision(int b) {
  if (b != 32 && b != 64) throw ConfigError("precision must be 32 or 64 bits");
}

bool valid_tag(std::uint8_t t) { return t >= 1 && t <= 5; }

}  // namespace

MessageTag tag_of(const RoundMessage& msg) { return static_cast<MessageTag>(msg.index() + 1); }

Bytes encode_header(const FrameHeader& h) {
  Bytes out(kFrameMagic.begin(), kFrameMagic.end());
  out.push_back(kFrameVersion);
  out.push_back(static_cast<std::uint8_t>(h.tag));
  put_u32(out, h.round);
  put_u32(out, h.payload_length);
  return out;
}

FrameHeader decode_header(std::span<const std::uint8_t> bytes, std::uint32_t max_payload) {
  if (bytes.size() < kHeaderSize) throw ProtocolError("frame: truncated header", bytes.size());
  for (std::size_t i = 0; i < kFrameMagic.size(); ++i)
    if (bytes[i] != kFrameMagic[i]) throw ProtocolError("frame: bad magic", i);
  if (bytes[4] != kFrameVersion) throw ProtocolError("frame: unsupported version", 4);
  if (!valid_tag(bytes[5])) throw ProtocolError("frame: unknown message tag", 5);
  FrameHeader h{static_cast<MessageTag>(bytes[5]), get_u32(bytes, 6), get_u32(bytes, 10)};
  if (h.payload_length > max_payload) throw ProtocolError("frame: oversize payload", 10);
  return h;
}

std::pair<FrameHeader, std::span<const std::uint8_t>> split_frame(std::span<const std::uint8_t> frame,
                                                                  std::uint32_t max_payload) {
  const auto h = decode_header(frame, max_payload);
  if (frame.size() < kHeaderSize + h.payload_length) throw ProtocolError("frame: truncated payload", frame.size());
  if (frame.size() > kHeaderSize + h.payload_length)
    throw ProtocolError("frame: trailing bytes", kHeaderSize + h.payload_length);
  return {h, frame.subspan(kHeaderSize, h.payload_length)};
}

Bytes encode_mask(const PruneMask& mask) {
  Bytes out;
  for (std::size_t m = 0; m < mask.layer_count(); ++m) pack_layer(out, mask.layer(m));
  return out;
}

std::size_t encoded_mask_size(const ArchSpec& arch) {
  std::size_t n = 0;
  for (const auto& l : arch.dense_layers()) n += packed_size(l.groups);
  return n;
}

PruneMask decode_mask(std::span<const std::uint8_t> payload, const ArchSpec& arch) {
  const std::size_t expected = encoded_mask_size(arch);
  if (payload.size() < expected) throw ProtocolError("mask: truncated payload", payload.size());
  if (payload.size() > expected) throw ProtocolError("mask: trailing bytes", expected);
  PruneMask mask = PruneMask::all_ones(arch);
  std::size_t at = 0;
  for (std::size_t m = 0; m < mask.layer_count(); ++m) {
    const auto groups = mask.layer(m).size();
    mask.layer(m) = unpack_layer(payload, at, groups);
    at += packed_size(static_cast<std::size_t>(groups));
  }
  return mask;
}

Bytes encode_mask_delta(const PruneMask& mask, const PruneMask& previous) {
  if (!mask.same_layout(previous)) throw ConfigError("delta mask: layout mismatch");
  const std::size_t layers = mask.layer_count();
  Bytes bitmap(packed_size(layers), 0);
  Bytes body;
  bool any = false;
  for (std::size_t m = 0; m < layers; ++m) {
    if ((mask.layer(m) != previous.layer(m)).any()) {
      bitmap[m / 8] |= static_cast<std::uint8_t>(1u << (m % 8));
      pack_layer(body, mask.layer(m));
      any = true;
    }
  }
  if (!any) return {};
  Bytes full = encode_mask(mask);
  if (bitmap.size() + body.size() >= full.size()) return full;
  bitmap.insert(bitmap.end(), body.begin(), body.end());
  return bitmap;
}

PruneMask decode_mask_delta(std::span<const std::uint8_t> payload, const ArchSpec& arch, const PruneMask& previous) {
  if (!previous.matches(arch)) throw ConfigError("delta mask: previous mask does not match architecture");
  if (payload.empty()) return previous;
  const std::size_t full = encoded_mask_size(arch);
  if (payload.size() == full) return decode_mask(payload, arch);
  const std::size_t layers = previous.layer_count();
  const std::size_t head = packed_size(layers);
  if (payload.size() < head) throw ProtocolError("delta mask: truncated layer bitmap", payload.size());
  if (layers % 8 != 0 && (payload[head - 1] >> (layers % 8)))
    throw ProtocolError("delta mask: non-zero bitmap padding", head - 1);
  PruneMask mask = previous;
  std::size_t at = head;
  std::size_t changed = 0;
  for (std::size_t m = 0; m < layers; ++m) {
    if (!((payload[m / 8] >> (m % 8)) & 1u)) continue;
    const auto groups = previous.layer(m).size();
    const std::size_t n = packed_size(static_cast<std::size_t>(groups));
    if (at + n > payload.size()) throw ProtocolError("delta mask: truncated layer", payload.size());
    mask.layer(m) = unpack_layer(payload, at, groups);
    at += n;
    ++changed;
  }
  if (changed == 0) throw ProtocolError("delta mask: empty layer bitmap", 0);
  if (at != payload.size()) throw ProtocolError("delta mask: trailing bytes", at);
  return mask;
}

Bytes encode_weights(const Model& model, int precision_bits, const PruneMask& agreed) {
  check_precision(precision_bits);
  if (agreed.layer_count() != model.layer_count()) throw ConfigError("weights: mask does not match model");
  Bytes out;
  auto put = [&](double v) {
    if (precision_bits == 32) {
      const auto u = std::bit_cast<std::uint32_t>(static_cast<float>(v));
      for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(u >> (8 * i)));
    } else {
      const auto u = std::bit_cast<std::uint64_t>(v);
      for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(u >> (8 * i)));
    }
  };
  for (std::size_t m = 0; m < model.layer_count(); ++m) {
    const auto& layer = model.layer(m);
    for (Eigen::Index l = 0; l < layer.weight.rows(); ++l) {
      if (!agreed.layer(m)(l)) continue;
      for (Eigen::Index j = 0; j < layer.weight.cols(); ++j) put(layer.weight(l, j));
      put(layer.bias(l));
    }
  }
  return out;
}

Model decode_weights(std::span<const std::uint8_t> payload, const ArchSpec& arch, int precision_bits,
                     const PruneMask& agreed) {
  check_precision(precision_bits);
  if (!agreed.matches(arch)) throw ConfigError("weights: mask does not match architecture");
  const std::size_t width = static_cast<std::size_t>(precision_bits) / 8;
  std::size_t expected = 0;
  const auto dense = arch.dense_layers();
  for (std::size_t m = 0; m < dense.size(); ++m) expected += agreed.keep_count(m) * dense[m].group_size * width;
  if (payload.size() < expected) throw ProtocolError("weights: truncated payload", payload.size());
  if (payload.size() > expected) throw ProtocolError("weights: trailing bytes", expected);

  std::size_t at = 0;
  auto get = [&]() -> double {
    if (precision_bits == 32) {
      std::uint32_t u = 0;
      for (std::size_t i = 0; i < 4; ++i) u |= std::uint32_t{payload[at + i]} << (8 * i);
      at += 4;
      return static_cast<double>(std::bit_cast<float>(u));
    }
    std::uint64_t u = 0;
    for (std::size_t i = 0; i < 8; ++i) u |= std::uint64_t{payload[at + i]} << (8 * i);
    at += 8;
    return std::bit_cast<double>(u);
  };
  Model model(arch);
  for (std::size_t m = 0; m < model.layer_count(); ++m) {
    auto& layer = model.layer(m);
    for (Eigen::Index l = 0; l < layer.weight.rows(); ++l) {
      if (!agreed.layer(m)(l)) continue;
      for (Eigen::Index j = 0; j < layer.weight.cols(); ++j) layer.weight(l, j) = get();
      layer.bias(l) = get();
    }
  }
  return model;
}

EncodedFrame encode_message(const RoundMessage& msg, std::uint32_t round, const CodecOptions& opt, LinkState& state) {
  const PruneMask all = PruneMask::all_ones(opt.arch);
  auto mask_payload = [&](const PruneMask& mask, std::optional<PruneMask>& last) {
    if (!mask.matches(opt.arch)) throw ConfigError("encode: mask does not match architecture");
    Bytes p = opt.delta_masks && last ? encode_mask_delta(mask, *last) : encode_mask(mask);
    last = mask;
    return p;
  };
  auto weight_payload = [&](const Model& w) {
    if (!(w.arch() == opt.arch)) throw ConfigError("encode: model does not match architecture");
    return encode_weights(w, opt.precision_bits, opt.compact_weights ? state.agreed : all);
  };

  Bytes payload = std::visit(
      [&](const auto& m) -> Bytes {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, MaskUpload>) {
          return mask_payload(m.mask, state.last_mask_up);
        } else if constexpr (std::is_same_v<T, GlobalMask>) {
          Bytes p = mask_payload(m.mask, state.last_mask_down);
          state.agreed = m.mask;
          return p;
        } else {
          return weight_payload(m.weights);
        }
      },
      msg);
  if (payload.size() > opt.max_payload) throw ProtocolError("frame: oversize payload", payload.size());
  EncodedFrame out;
  out.payload_size = payload.size();
  out.bytes = encode_header({tag_of(msg), round, static_cast<std::uint32_t>(payload.size())});
  out.bytes.insert(out.bytes.end(), payload.begin(), payload.end());
  return out;
}

DecodedMessage decode_message(std::span<const std::uint8_t> frame, const CodecOptions& opt, LinkState& state, int node) {
  const auto [h, payload] = split_frame(frame, opt.max_payload);
  const PruneMask all = PruneMask::all_ones(opt.arch);
  auto read_mask = [&](std::optional<PruneMask>& last) {
    PruneMask m = opt.delta_masks && last ? decode_mask_delta(payload, opt.arch, *last) : decode_mask(payload, opt.arch);
    last = m;
    return m;
  };
  auto read_weights = [&] {
    return decode_weights(payload, opt.arch, opt.precision_bits, opt.compact_weights ? state.agreed : all);
  };

  DecodedMessage out{h.round, InitWeights{}, payload.size()};
  try {
    switch (h.tag) {
      case MessageTag::init_weights: out.message = InitWeights{read_weights()}; break;
      case MessageTag::mask_upload: out.message = MaskUpload{node, read_mask(state.last_mask_up)}; break;
      case MessageTag::global_mask: {
        PruneMask m = read_mask(state.last_mask_down);
        state.agreed = m;
        out.message = GlobalMask{std::move(m)};
        break;
      }
      case MessageTag::weight_upload: out.message = WeightUpload{node, read_weights()}; break;
      case MessageTag::global_weights: out.message = GlobalWeights{read_weights()}; break;
    }
  } catch (const ProtocolError& e) {
    throw ProtocolError("payload: " + e.reason(), kHeaderSize + e.offset());
  }
  return out;
}

}  // namespace mpfl
