#include "mpfl/transport.hpp"

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <condition_variable>
#include <cstring>
#include <deque>
#include <exception>
#include <map>
#include <mutex>
#include <thread>

namespace mpfl {

namespace {

std::size_t stream_index(int node, Direction dir, std::size_t nodes) {
  if (node < 0 || static_cast<std::size_t>(node) >= nodes) throw TransportError("unknown node " + std::to_string(node));
  return static_cast<std::size_t>(node) * 2 + (dir == Direction::up ? 0 : 1);
}

class LoopbackTransport final : public Transport {
 public:
  LoopbackTransport(std::size_t nodes, std::uint32_t max_payload)
      : nodes_(nodes), max_payload_(max_payload), streams_(nodes * 2) {}

  std::size_t nodes() const override { return nodes_; }

  void send(int node, Direction dir, std::span<const std::uint8_t> frame) override {
    auto& s = streams_[stream_index(node, dir, nodes_)];
    s.insert(s.end(), frame.begin(), frame.end());
  }

  Bytes recv(int node, Direction dir) override {
    auto& s = streams_[stream_index(node, dir, nodes_)];
    if (s.size() < kHeaderSize) throw TransportError("loopback: no complete frame pending");
    Bytes header(s.begin(), s.begin() + kHeaderSize);
    const auto h = decode_header(header, max_payload_);
    const std::size_t total = kHeaderSize + h.payload_length;
    if (s.size() < total) throw TransportError("loopback: frame truncated in stream");
    Bytes frame(s.begin(), s.begin() + static_cast<std::ptrdiff_t>(total));
    s.erase(s.begin(), s.begin() + static_cast<std::ptrdiff_t>(total));
    return frame;
  }

 private:
  std::size_t nodes_;
  std::uint32_t max_payload_;
  std::vector<std::deque<std::uint8_t>> streams_;
};

class Socket {
 public:
  Socket() = default;
  explicit Socket(int fd) : fd_(fd) {}
  Socket(Socket&& o) noexcept : fd_(std::exchange(o.fd_, -1)) {}
  Socket& operator=(Socket&& o) noexcept {
    if (this != &o) {
      close();
      fd_ = std::exchange(o.fd_, -1);
    }
    return *this;
  }
  ~Socket() { close(); }

  int fd() const noexcept { return fd_; }
  void shutdown() const {
    if (fd_ >= 0) ::shutdown(fd_, SHUT_RDWR);
  }
  void close() {
    if (fd_ >= 0) ::close(fd_);
    fd_ = -1;
  }

  void write_all(std::span<const std::uint8_t> data) const {
    std::size_t sent = 0;
    while (sent < data.size()) {
      const auto n = ::send(fd_, data.data() + sent, data.size() - sent, MSG_NOSIGNAL);
      if (n < 0 && errno == EINTR) continue;
      if (n <= 0) throw TransportError(std::string("tcp: send failed: ") + std::strerror(errno));
      sent += static_cast<std::size_t>(n);
    }
  }

  // false on orderly EOF before any byte was read.
  bool read_exact(std::uint8_t* out, std::size_t len) const {
    std::size_t got = 0;
    while (got < len) {
      const auto n = ::recv(fd_, out + got, len - got, 0);
      if (n < 0 && errno == EINTR) continue;
      if (n < 0) throw TransportError(std::string("tcp: recv failed: ") + std::strerror(errno));
      if (n == 0) {
        if (got == 0) return false;
        throw TransportError("tcp: connection closed mid-frame");
      }
      got += static_cast<std::size_t>(n);
    }
    return true;
  }

 private:
  int fd_ = -1;
};

// Frames read off one socket by a background thread.
class FrameInbox {
 public:
  void push(Bytes frame) {
    {
      std::lock_guard lock(mu_);
      frames_.push_back(std::move(frame));
    }
    cv_.notify_all();
  }
  void fail(std::exception_ptr e) {
    {
      std::lock_guard lock(mu_);
      error_ = e;
      closed_ = true;
    }
    cv_.notify_all();
  }
  void close() {
    {
      std::lock_guard lock(mu_);
      closed_ = true;
    }
    cv_.notify_all();
  }
  Bytes pop(std::chrono::milliseconds timeout) {
    std::unique_lock lock(mu_);
    if (!cv_.wait_for(lock, timeout, [&] { return !frames_.empty() || closed_; }))
      throw TransportError("tcp: receive timed out");
    if (!frames_.empty()) {
      Bytes f = std::move(frames_.front());
      frames_.pop_front();
      return f;
    }
    if (error_) std::rethrow_exception(error_);
    throw TransportError("tcp: connection lost");
  }

 private:
  std::mutex mu_;
  std::condition_variable cv_;
  std::deque<Bytes> frames_;
  std::exception_ptr error_;
  bool closed_ = false;
};

class TcpTransport final : public Transport {
 public:
  TcpTransport(std::size_t nodes, const TcpOptions& opt) : opt_(opt), links_(nodes) {
    Socket listener(::socket(AF_INET, SOCK_STREAM, 0));
    if (listener.fd() < 0) throw TransportError("tcp: socket() failed");
    int one = 1;
    ::setsockopt(listener.fd(), SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(opt.port);
    if (::inet_pton(AF_INET, opt.host.c_str(), &addr.sin_addr) != 1) throw TransportError("tcp: bad host " + opt.host);
    if (::bind(listener.fd(), reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0)
      throw TransportError(std::string("tcp: bind failed: ") + std::strerror(errno));
    if (::listen(listener.fd(), static_cast<int>(nodes)) != 0) throw TransportError("tcp: listen failed");
    socklen_t len = sizeof addr;
    ::getsockname(listener.fd(), reinterpret_cast<sockaddr*>(&addr), &len);

    // Connect and accept one node at a time so accept order equals node id.
    for (auto& link : links_) {
      Socket client(::socket(AF_INET, SOCK_STREAM, 0));
      if (::connect(client.fd(), reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0)
        throw TransportError(std::string("tcp: connect failed: ") + std::strerror(errno));
      Socket server(::accept(listener.fd(), nullptr, nullptr));
      if (server.fd() < 0) throw TransportError("tcp: accept failed");
      for (int fd : {client.fd(), server.fd()}) ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
      link.node_end = std::move(client);
      link.ps_end = std::move(server);
    }
    for (auto& link : links_) {
      link.down_reader = std::thread([this, &link] { pump(link.node_end, link.down_inbox); });
      link.up_reader = std::thread([this, &link] { pump(link.ps_end, link.up_inbox); });
    }
  }

  ~TcpTransport() override {
    for (auto& link : links_) {
      link.node_end.shutdown();
      link.ps_end.shutdown();
    }
    for (auto& link : links_) {
      if (link.down_reader.joinable()) link.down_reader.join();
      if (link.up_reader.joinable()) link.up_reader.join();
    }
  }

  std::size_t nodes() const override { return links_.size(); }

  void send(int node, Direction dir, std::span<const std::uint8_t> frame) override {
    auto& link = links_.at(stream_index(node, dir, links_.size()) / 2);
    (dir == Direction::up ? link.node_end : link.ps_end).write_all(frame);
  }

  Bytes recv(int node, Direction dir) override {
    auto& link = links_.at(stream_index(node, dir, links_.size()) / 2);
    return (dir == Direction::up ? link.up_inbox : link.down_inbox).pop(opt_.recv_timeout);
  }

 private:
  struct Link {
    Socket node_end, ps_end;
    FrameInbox up_inbox, down_inbox;
    std::thread up_reader, down_reader;
  };

  void pump(const Socket& sock, FrameInbox& inbox) const {
    try {
      for (;;) {
        Bytes frame(kHeaderSize);
        if (!sock.read_exact(frame.data(), kHeaderSize)) break;
        const auto h = decode_header(frame, opt_.max_payload);
        frame.resize(kHeaderSize + h.payload_length);
        if (h.payload_length > 0 && !sock.read_exact(frame.data() + kHeaderSize, h.payload_length))
          throw TransportError("tcp: connection closed mid-frame");
        inbox.push(std::move(frame));
      }
      inbox.close();
    } catch (...) {
      inbox.fail(std::current_exception());
    }
  }

  TcpOptions opt_;
  std::vector<Link> links_;
};

}  // namespace

std::unique_ptr<Transport> make_loopback_transport(std::size_t nodes, std::uint32_t max_payload) {
  return std::make_unique<LoopbackTransport>(nodes, max_payload);
}

std::unique_ptr<Transport> make_tcp_transport(std::size_t nodes, const TcpOptions& opt) {
  return std::make_unique<TcpTransport>(nodes, opt);
}

Messenger::Messenger(std::unique_ptr<Transport> transport, CodecOptions codec, BandwidthLedger& ledger,
                     bool count_headers)
    : transport_(std::move(transport)), codec_(std::move(codec)), ledger_(ledger), count_headers_(count_headers) {
  ps_side_.assign(transport_->nodes(), LinkState(codec_.arch));
  node_side_.assign(transport_->nodes(), LinkState(codec_.arch));
}

void Messenger::send(int node, Direction dir, std::uint32_t round, const RoundMessage& msg) {
  auto& state = (dir == Direction::down ? ps_side_ : node_side_).at(static_cast<std::size_t>(node));
  const auto frame = encode_message(msg, round, codec_, state);
  transport_->send(node, dir, frame.bytes);
  const std::size_t bytes = count_headers_ ? frame.bytes.size() : frame.payload_size;
  ledger_.record(node, round, dir, static_cast<std::uint64_t>(bytes) * 8);
}

DecodedMessage Messenger::recv(int node, Direction dir) {
  auto& state = (dir == Direction::down ? node_side_ : ps_side_).at(static_cast<std::size_t>(node));
  const Bytes frame = transport_->recv(node, dir);
  return decode_message(frame, codec_, state, node);
}

void Messenger::to_node(int node, std::uint32_t round, const RoundMessage& msg) { send(node, Direction::down, round, msg); }

void Messenger::broadcast(std::uint32_t round, const RoundMessage& msg) {
  for (std::size_t n = 0; n < nodes(); ++n) to_node(static_cast<int>(n), round, msg);
}

void Messenger::to_ps(int node, std::uint32_t round, const RoundMessage& msg) { send(node, Direction::up, round, msg); }

DecodedMessage Messenger::recv_at_node(int node) { return recv(node, Direction::down); }

DecodedMessage Messenger::recv_at_ps(int node) { return recv(node, Direction::up); }

}  // namespace mpfl
