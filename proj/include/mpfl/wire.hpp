#pragma once

// Byte-exact round messages.
//
// Frame = 14-byte header + payload. Header fields, in order:
//   magic "MPFL" (4) | version 1 (1) | tag (1) | round u32 LE (4) | payload length u32 LE (4)
//
// Mask payload: each dense layer in order, its L(m) bits packed 8 per byte,
// least significant bit first, last byte of every layer zero-padded.
// Weight payload: each dense layer in order, each kept group in order, its
// in_dim weights then its bias as IEEE-754 LE (float32 or float64). Groups
// pruned by the link's agreed mask are not sent.
//
// The sending node is identified by the session a frame travels on, not by
// payload bytes, so upload payloads contain nothing but mask bits or weights.

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <variant>
#include <vector>

#include "mpfl/arch.hpp"
#include "mpfl/mask.hpp"
#include "mpfl/model.hpp"

namespace mpfl {

using Bytes = std::vector<std::uint8_t>;

inline constexpr std::array<std::uint8_t, 4> kFrameMagic{'M', 'P', 'F', 'L'};
inline constexpr std::uint8_t kFrameVersion = 1;
inline constexpr std::size_t kHeaderSize = 14;
inline constexpr std::uint32_t kDefaultMaxPayload = 64u << 20;

enum class MessageTag : std::uint8_t {
  init_weights = 1,
  mask_upload = 2,
  global_mask = 3,
  weight_upload = 4,
  global_weights = 5,
};

struct InitWeights {
  Model weights;
  bool operator==(const InitWeights&) const = default;
};
struct MaskUpload {
  int node = 0;
  PruneMask mask;
  bool operator==(const MaskUpload&) const = default;
};
struct GlobalMask {
  PruneMask mask;
  bool operator==(const GlobalMask&) const = default;
};
struct WeightUpload {
  int node = 0;
  Model weights;
  bool operator==(const WeightUpload&) const = default;
};
struct GlobalWeights {
  Model weights;
  bool operator==(const GlobalWeights&) const = default;
};

using RoundMessage = std::variant<InitWeights, MaskUpload, GlobalMask, WeightUpload, GlobalWeights>;

MessageTag tag_of(const RoundMessage& msg);

struct FrameHeader {
  MessageTag tag = MessageTag::init_weights;
  std::uint32_t round = 0;
  std::uint32_t payload_length = 0;
};

Bytes encode_header(const FrameHeader& h);

/// Validates magic, version, tag and the length bound.
FrameHeader decode_header(std::span<const std::uint8_t> bytes, std::uint32_t max_payload = kDefaultMaxPayload);

/// Splits a complete frame; the payload must be exactly payload_length bytes.
std::pair<FrameHeader, std::span<const std::uint8_t>> split_frame(std::span<const std::uint8_t> frame,
                                                                  std::uint32_t max_payload = kDefaultMaxPayload);

// ---- masks ----------------------------------------------------------------

/// Full encoding; Σ ceil(L(m)/8) bytes.
Bytes encode_mask(const PruneMask& mask);

/// Inverse of encode_mask for the dense-layer layout of `arch`.
PruneMask decode_mask(std::span<const std::uint8_t> payload, const ArchSpec& arch);

/// Size in bytes of the full encoding.
std::size_t encoded_mask_size(const ArchSpec& arch);

/// Delta encoding against the previous mask sent on the same link:
///   - empty when nothing changed,
///   - otherwise a layer-presence bitmap (ceil(M/8) bytes, LSB first) followed
///     by the changed layers' packed bits,
///   - or the full encoding whenever that is not longer.
/// A payload whose length equals the full size is always a full encoding.
Bytes encode_mask_delta(const PruneMask& mask, const PruneMask& previous);

PruneMask decode_mask_delta(std::span<const std::uint8_t> payload, const ArchSpec& arch, const PruneMask& previous);

// ---- weights --------------------------------------------------------------

/// precision_bits is 32 or 64. Groups cleared in `agreed` are omitted.
Bytes encode_weights(const Model& model, int precision_bits, const PruneMask& agreed);

Model decode_weights(std::span<const std::uint8_t> payload, const ArchSpec& arch, int precision_bits,
                     const PruneMask& agreed);

// ---- messages -------------------------------------------------------------

struct CodecOptions {
  ArchSpec arch;
  int precision_bits = 32;
  bool delta_masks = false;
  bool compact_weights = true;
  std::uint32_t max_payload = kDefaultMaxPayload;
};

/// What one end of a link remembers between frames. Sender and receiver each
/// keep their own copy and advance it identically.
struct LinkState {
  std::optional<PruneMask> last_mask_up;
  std::optional<PruneMask> last_mask_down;
  PruneMask agreed;  // last global mask delivered on this link; governs weight compaction

  explicit LinkState(const ArchSpec& arch) : agreed(PruneMask::all_ones(arch)) {}
};

struct EncodedFrame {
  Bytes bytes;
  std::size_t payload_size = 0;
};

EncodedFrame encode_message(const RoundMessage& msg, std::uint32_t round, const CodecOptions& opt, LinkState& state);

struct DecodedMessage {
  std::uint32_t round = 0;
  RoundMessage message;
  std::size_t payload_size = 0;
};

/// `node` fills the node id of upload messages (it is implied by the session).
DecodedMessage decode_message(std::span<const std::uint8_t> frame, const CodecOptions& opt, LinkState& state, int node);

}  // namespace mpfl
