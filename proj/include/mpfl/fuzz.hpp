#pragma once

// Randomized codec checks shared by the CLI `fuzz` subcommand and the tests.

#include <cstdint>
#include <string>
#include <vector>

namespace mpfl {

struct FuzzReport {
  std::size_t cases = 0;
  std::size_t roundtrip_failures = 0;
  std::size_t corrupt_frames = 0;
  std::size_t corrupt_rejected = 0;    // ProtocolError
  std::size_t corrupt_accepted = 0;    // decoded to some valid message
  std::size_t unexpected_errors = 0;   // anything other than ProtocolError
  std::vector<std::string> samples;    // first few failure descriptions

  bool ok() const noexcept { return roundtrip_failures == 0 && unexpected_errors == 0; }
};

/// Every case builds a random architecture, codec settings and a short
/// message sequence on one link, checks decode(encode(x)) == x for each
/// message, then decodes a corrupted copy of one frame (bit flips,
/// truncation, extension or random bytes).
FuzzReport fuzz_codec(std::size_t cases, std::uint64_t seed);

}  // namespace mpfl
