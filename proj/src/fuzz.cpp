#include "mpfl/fuzz.hpp"

#include "mpfl/wire.hpp"

namespace mpfl {

namespace {

ArchSpec random_arch(Rng& rng) {
  const std::size_t depth = 2 + rng.below(3);
  std::vector<std::size_t> dims;
  for (std::size_t i = 0; i < depth; ++i) dims.push_back(1 + rng.below(20));
  return ArchSpec::from_dims(dims, rng.below(2) == 1);
}

PruneMask random_mask(const ArchSpec& arch, const PruneMask& within, Rng& rng) {
  PruneMask m = within;
  for (std::size_t i = 0; i < m.layer_count(); ++i) {
    if (!m.prunable(i)) continue;
    for (Eigen::Index l = 0; l < m.layer(i).size(); ++l)
      if (rng.below(3) == 0) m.layer(i)(l) = false;
  }
  (void)arch;
  return m;
}

// Values survive a float32 trip exactly, and rows outside `agreed` are zero,
// so the decoded message must equal the original bit for bit.
Model random_model(const ArchSpec& arch, const PruneMask& agreed, Rng& rng) {
  Model w(arch);
  for (std::size_t m = 0; m < w.layer_count(); ++m) {
    auto& l = w.layer(m);
    for (Eigen::Index i = 0; i < l.weight.size(); ++i) l.weight.data()[i] = static_cast<float>(rng.uniform(-4, 4));
    for (Eigen::Index i = 0; i < l.bias.size(); ++i) l.bias(i) = static_cast<float>(rng.uniform(-4, 4));
  }
  return apply_mask(std::move(w), agreed);
}

void corrupt(Bytes& f, Rng& rng) {
  switch (rng.below(4)) {
    case 0: {
      const auto flips = 1 + rng.below(4);
      for (std::uint64_t i = 0; i < flips; ++i) f[rng.below(f.size())] ^= static_cast<std::uint8_t>(1u << rng.below(8));
      break;
    }
    case 1: f.resize(rng.below(f.size())); break;
    case 2: {
      const auto extra = 1 + rng.below(8);
      for (std::uint64_t i = 0; i < extra; ++i) f.push_back(static_cast<std::uint8_t>(rng.below(256)));
      break;
    }
    default:
      for (std::size_t i = rng.below(2) ? kHeaderSize : 0; i < f.size(); ++i) f[i] = static_cast<std::uint8_t>(rng.below(256));
  }
}

}  // namespace

FuzzReport fuzz_codec(std::size_t cases, std::uint64_t seed) {
  FuzzReport rep;
  Rng rng(seed);
  auto note = [&](const std::string& s) {
    if (rep.samples.size() < 8) rep.samples.push_back(s);
  };
  for (std::size_t c = 0; c < cases; ++c) {
    ++rep.cases;
    const ArchSpec arch = random_arch(rng);
    CodecOptions opt{arch};
    opt.precision_bits = rng.below(2) ? 64 : 32;
    opt.delta_masks = rng.below(2) == 1;
    opt.compact_weights = rng.below(2) == 1;
    LinkState tx(arch), rx(arch);

    PruneMask global = PruneMask::all_ones(arch);
    PruneMask up = global;
    std::vector<Bytes> frames;
    const auto steps = 1 + rng.below(6);
    try {
      for (std::uint64_t s = 0; s < steps; ++s) {
        RoundMessage msg;
        const PruneMask& agreed = tx.agreed;
        switch (rng.below(5)) {
          case 0: msg = InitWeights{random_model(arch, agreed, rng)}; break;
          case 1:
            // Repeat the previous upload sometimes so empty deltas get exercised.
            if (rng.below(3) != 0) up = random_mask(arch, global, rng);
            msg = MaskUpload{static_cast<int>(c % 7), up};
            break;
          case 2:
            if (rng.below(3) != 0) global = random_mask(arch, global, rng);
            msg = GlobalMask{global};
            break;
          case 3: msg = WeightUpload{static_cast<int>(c % 7), random_model(arch, agreed, rng)}; break;
          default: msg = GlobalWeights{random_model(arch, agreed, rng)};
        }
        const auto round = static_cast<std::uint32_t>(rng.next());
        auto enc = encode_message(msg, round, opt, tx);
        auto dec = decode_message(enc.bytes, opt, rx, static_cast<int>(c % 7));
        if (dec.round != round || !(dec.message == msg) || dec.payload_size != enc.payload_size ||
            !(tx.agreed == rx.agreed)) {
          ++rep.roundtrip_failures;
          note("case " + std::to_string(c) + " step " + std::to_string(s) + ": round trip mismatch");
          break;
        }
        frames.push_back(std::move(enc.bytes));
      }
    } catch (const std::exception& e) {
      ++rep.roundtrip_failures;
      note("case " + std::to_string(c) + ": " + e.what());
      continue;
    }

    // Corrupt one frame and decode it against a fresh receiver.
    Bytes bad = frames[rng.below(frames.size())];
    corrupt(bad, rng);
    ++rep.corrupt_frames;
    LinkState fresh(arch);
    if (rng.below(2)) fresh = rx;
    try {
      decode_message(bad, opt, fresh, 0);
      ++rep.corrupt_accepted;
    } catch (const ProtocolError&) {
      ++rep.corrupt_rejected;
    } catch (const std::exception& e) {
      ++rep.unexpected_errors;
      note("case " + std::to_string(c) + " corrupt: " + e.what());
    }
  }
  return rep;
}

}  // namespace mpfl
