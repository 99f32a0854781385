#pragma once

#include <chrono>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace smoothcert::net {

/// Owning TCP socket descriptor.
class Socket {
 public:
  Socket() = default;
  explicit Socket(int fd) : fd_(fd) {}
  Socket(const Socket&) = delete;
  Socket& operator=(const Socket&) = delete;
  Socket(Socket&& other) noexcept : fd_(std::exchange(other.fd_, -1)) {}
  Socket& operator=(Socket&& other) noexcept;
  ~Socket();

  int fd() const noexcept { return fd_; }
  bool valid() const noexcept { return fd_ >= 0; }
  void close() noexcept;
  /// Unblocks any thread waiting on this socket.
  void shutdown() noexcept;

  /// Writes one length-prefixed frame. Throws std::system_error on I/O failure.
  void send_frame(std::span<const std::uint8_t> payload) const;
  void send_frame(std::string_view payload) const;
  /// Reads one frame; std::nullopt on orderly EOF before the length prefix.
  std::optional<std::vector<std::uint8_t>> recv_frame() const;

 private:
  int fd_ = -1;
};

Socket connect_tcp(const std::string& host, std::uint16_t port, std::chrono::milliseconds timeout);

/// Listening socket bound to host:port (port 0 picks a free port).
Socket listen_tcp(const std::string& host, std::uint16_t port);
std::uint16_t local_port(const Socket& s);
/// Blocks until a client connects; invalid Socket when the listener was shut down.
Socket accept(const Socket& listener);

/// Parses "host:port".
std::pair<std::string, std::uint16_t> parse_endpoint(const std::string& endpoint);

}  // namespace smoothcert::net
