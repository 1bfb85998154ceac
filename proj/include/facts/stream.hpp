#pragma once

#include <arpa/inet.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <unistd.h>

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <deque>
#include <memory>
#include <mutex>
#include <thread>

#include "facts/common.hpp"

namespace facts {

/// Raised on connection loss / short reads; protocol loops treat it as EOF.
class StreamClosed : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A reliable ordered byte stream. Implementations must allow a concurrent
/// reader and writer (one of each).
class Stream {
 public:
  virtual ~Stream() = default;
  virtual void read_exact(std::uint8_t* buf, std::size_t len) = 0;
  /// Up to len bytes, at least one; throws StreamClosed at EOF.
  virtual std::size_t read_some(std::uint8_t* buf, std::size_t len) = 0;
  virtual void write_all(const std::uint8_t* buf, std::size_t len) = 0;
  virtual void close() = 0;
};

class TcpStream : public Stream {
 public:
  explicit TcpStream(int fd) : fd_(fd) {
    int one = 1;
    ::setsockopt(fd_, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
  }
  ~TcpStream() override { close(); }
  TcpStream(const TcpStream&) = delete;
  TcpStream& operator=(const TcpStream&) = delete;

  void read_exact(std::uint8_t* buf, std::size_t len) override {
    std::size_t got = 0;
    while (got < len) got += read_some(buf + got, len - got);
  }

  std::size_t read_some(std::uint8_t* buf, std::size_t len) override {
    for (;;) {
      ssize_t r = ::recv(fd_.load(), buf, len, 0);
      if (r > 0) return static_cast<std::size_t>(r);
      if (r == 0) throw StreamClosed("connection closed");
      if (errno != EINTR) throw StreamClosed("recv failed");
    }
  }

  void write_all(const std::uint8_t* buf, std::size_t len) override {
    std::size_t sent = 0;
    while (sent < len) {
      ssize_t r = ::send(fd_.load(), buf + sent, len - sent, MSG_NOSIGNAL);
      if (r < 0) {
        if (errno == EINTR) continue;
        throw StreamClosed("send failed");
      }
      sent += static_cast<std::size_t>(r);
    }
  }

  void close() override {
    int fd = fd_.exchange(-1);
    if (fd >= 0) {
      ::shutdown(fd, SHUT_RDWR);
      ::close(fd);
    }
  }

  /// Unblocks any reader/writer without releasing the descriptor.
  void shutdown() {
    int fd = fd_.load();
    if (fd >= 0) ::shutdown(fd, SHUT_RDWR);
  }

 private:
  std::atomic<int> fd_;
};

inline std::unique_ptr<TcpStream> tcp_connect(const std::string& host, std::uint16_t port) {
  int fd = ::socket(AF_INET, SOCK_STREAM, 0);
  if (fd < 0) throw StreamClosed("socket() failed");
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(port);
  if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1) {
    ::close(fd);
    throw ParameterError("tcp_connect: bad address " + host);
  }
  if (::connect(fd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0) {
    ::close(fd);
    throw StreamClosed("connect to " + host + " failed");
  }
  return std::make_unique<TcpStream>(fd);
}

class TcpListener {
 public:
  TcpListener(const std::string& host, std::uint16_t port) {
    fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
    if (fd_ < 0) throw StreamClosed("socket() failed");
    int one = 1;
    ::setsockopt(fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(port);
    if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1) {
      ::close(fd_);
      throw ParameterError("TcpListener: bad address " + host);
    }
    if (::bind(fd_, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0 ||
        ::listen(fd_, 128) != 0) {
      ::close(fd_);
      throw StreamClosed("bind/listen failed");
    }
    socklen_t len = sizeof(addr);
    ::getsockname(fd_, reinterpret_cast<sockaddr*>(&addr), &len);
    port_ = ntohs(addr.sin_port);
  }
  ~TcpListener() { close(); }

  std::uint16_t port() const { return port_; }

  /// Blocks for the next connection; nullptr once close() is called.
  std::unique_ptr<TcpStream> accept() {
    for (;;) {
      int c = ::accept(fd_.load(), nullptr, nullptr);
      if (c >= 0) return std::make_unique<TcpStream>(c);
      if (errno == EINTR) continue;
      return nullptr;
    }
  }

  void close() {
    int fd = fd_.exchange(-1);
    if (fd >= 0) {
      ::shutdown(fd, SHUT_RDWR);
      ::close(fd);
    }
  }

 private:
  std::atomic<int> fd_ = -1;
  std::uint16_t port_ = 0;
};

/// Network-condition decorator applied at one endpoint: a fixed one-way
/// propagation delay plus a token-bucket style serialization time (8 bits
/// per byte over `bandwidth_bits_per_sec`) charged to each direction.
/// Outbound bytes sit in a queue until their release time, then flow to the
/// inner stream; inbound bytes are pulled eagerly off the inner stream and
/// become readable only after their release time. Bandwidth 0 = unlimited.
class DelayedStream : public Stream {
 public:
  DelayedStream(std::unique_ptr<Stream> inner, std::chrono::microseconds one_way_delay,
                double bandwidth_bits_per_sec = 0.0)
      : inner_(std::move(inner)),
        delay_(one_way_delay),
        bandwidth_(bandwidth_bits_per_sec),
        out_(delay_, bandwidth_),
        in_(delay_, bandwidth_) {
    writer_ = std::thread([this] { write_pump(); });
    reader_ = std::thread([this] { read_pump(); });
  }

  ~DelayedStream() override {
    close();
    if (writer_.joinable()) writer_.join();
    if (reader_.joinable()) reader_.join();
  }

  void write_all(const std::uint8_t* buf, std::size_t len) override { out_.push(buf, len); }

  void read_exact(std::uint8_t* buf, std::size_t len) override {
    std::size_t got = 0;
    while (got < len) got += in_.pull(buf + got, len - got);
  }

  std::size_t read_some(std::uint8_t* buf, std::size_t len) override {
    return in_.pull(buf, len);
  }

  void close() override {
    out_.close();
    in_.close();
    inner_->close();  // unblocks the read pump
  }

 private:
  /// One direction: timestamped byte chunks released after delay.
  class Channel {
   public:
    Channel(std::chrono::microseconds delay, double bandwidth)
        : delay_(delay), bandwidth_(bandwidth) {}

    void push(const std::uint8_t* buf, std::size_t len) {
      using clock = std::chrono::steady_clock;
      std::lock_guard<std::mutex> lk(mu_);
      if (closed_) throw StreamClosed("delayed stream closed");
      auto start = std::max(clock::now(), link_free_at_);
      auto ser = bandwidth_ > 0
                     ? std::chrono::microseconds(
                           static_cast<long>(8e6 * double(len) / bandwidth_))
                     : std::chrono::microseconds(0);
      link_free_at_ = start + ser;
      queue_.push_back({Bytes(buf, buf + len), link_free_at_ + delay_});
      cv_.notify_all();
    }

    /// Blocks until released bytes exist; returns up to len of them.
    std::size_t pull(std::uint8_t* buf, std::size_t len) {
      std::unique_lock<std::mutex> lk(mu_);
      for (;;) {
        if (!queue_.empty()) {
          auto release = queue_.front().release_at;
          if (std::chrono::steady_clock::now() >= release) break;
          cv_.wait_until(lk, release);
          continue;
        }
        if (closed_) throw StreamClosed("delayed stream closed");
        cv_.wait(lk);
      }
      Chunk& front = queue_.front();
      const std::size_t take = std::min(len, front.data.size() - offset_);
      std::memcpy(buf, front.data.data() + offset_, take);
      offset_ += take;
      if (offset_ == front.data.size()) {
        queue_.pop_front();
        offset_ = 0;
      }
      return take;
    }

    /// pull() for the pump side: whole chunks, used by write_pump.
    bool pull_chunk(Bytes& out) {
      std::unique_lock<std::mutex> lk(mu_);
      for (;;) {
        if (!queue_.empty()) {
          auto release = queue_.front().release_at;
          if (std::chrono::steady_clock::now() >= release) break;
          cv_.wait_until(lk, release);
          continue;
        }
        if (closed_) return false;
        cv_.wait(lk);
      }
      out = std::move(queue_.front().data);
      queue_.pop_front();
      return true;
    }

    void close() {
      std::lock_guard<std::mutex> lk(mu_);
      closed_ = true;
      cv_.notify_all();
    }

    bool drained() {
      std::lock_guard<std::mutex> lk(mu_);
      return closed_ && queue_.empty();
    }

   private:
    struct Chunk {
      Bytes data;
      std::chrono::steady_clock::time_point release_at;
    };
    std::chrono::microseconds delay_;
    double bandwidth_;
    std::mutex mu_;
    std::condition_variable cv_;
    std::deque<Chunk> queue_;
    std::size_t offset_ = 0;
    std::chrono::steady_clock::time_point link_free_at_ = std::chrono::steady_clock::now();
    bool closed_ = false;
  };

  void write_pump() {
    Bytes chunk;
    while (out_.pull_chunk(chunk)) {
      try {
        inner_->write_all(chunk.data(), chunk.size());
      } catch (const StreamClosed&) {
        out_.close();
        return;
      }
    }
  }

  void read_pump() {
    std::uint8_t buf[16384];
    try {
      for (;;) {
        const std::size_t n = inner_->read_some(buf, sizeof(buf));
        in_.push(buf, n);
      }
    } catch (const StreamClosed&) {
      in_.close();
    }
  }

  std::unique_ptr<Stream> inner_;
  std::chrono::microseconds delay_;
  double bandwidth_;
  Channel out_;
  Channel in_;
  std::thread writer_;
  std::thread reader_;
};

}  // namespace facts
