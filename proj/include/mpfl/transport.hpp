#pragma once

#include <chrono>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "mpfl/bandwidth.hpp"
#include "mpfl/wire.hpp"

namespace mpfl {

/// Reliable, ordered frame delivery between the PS and each of N nodes.
/// A link carries two independent streams: `up` (node -> PS) and `down`.
class Transport {
 public:
  virtual ~Transport() = default;
  virtual std::size_t nodes() const = 0;
  /// `frame` must be one complete encoded frame.
  virtual void send(int node, Direction dir, std::span<const std::uint8_t> frame) = 0;
  /// Next complete frame on the stream; throws TransportError on loss or timeout.
  virtual Bytes recv(int node, Direction dir) = 0;
};

/// In-process byte streams with the same framing as TCP. Single-threaded: recv
/// on an empty stream is an error rather than a wait.
std::unique_ptr<Transport> make_loopback_transport(std::size_t nodes, std::uint32_t max_payload = kDefaultMaxPayload);

struct TcpOptions {
  std::string host = "127.0.0.1";
  std::uint16_t port = 0;  // 0 = ephemeral
  std::uint32_t max_payload = kDefaultMaxPayload;
  std::chrono::milliseconds recv_timeout{30000};
};

/// PS listens on host:port and N node sockets connect to it. Each socket has a
/// reader thread that reassembles frames, so sends never wait on the peer.
std::unique_ptr<Transport> make_tcp_transport(std::size_t nodes, const TcpOptions& opt = {});

/// Encodes messages, moves them over a Transport, decodes them on the far side
/// and charges every sent payload to the ledger.
class Messenger {
 public:
  Messenger(std::unique_ptr<Transport> transport, CodecOptions codec, BandwidthLedger& ledger,
            bool count_headers = false);

  std::size_t nodes() const { return transport_->nodes(); }
  const CodecOptions& codec() const noexcept { return codec_; }

  void to_node(int node, std::uint32_t round, const RoundMessage& msg);
  void broadcast(std::uint32_t round, const RoundMessage& msg);
  void to_ps(int node, std::uint32_t round, const RoundMessage& msg);

  DecodedMessage recv_at_node(int node);
  DecodedMessage recv_at_ps(int node);

 private:
  void send(int node, Direction dir, std::uint32_t round, const RoundMessage& msg);
  DecodedMessage recv(int node, Direction dir);

  std::unique_ptr<Transport> transport_;
  CodecOptions codec_;
  BandwidthLedger& ledger_;
  bool count_headers_;
  std::vector<LinkState> ps_side_;
  std::vector<LinkState> node_side_;
};

}  // namespace mpfl
