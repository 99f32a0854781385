#include "smoothcert/net.hpp"

#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <sys/time.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <system_error>

#include "smoothcert/error.hpp"
#include "smoothcert/protocol.hpp"

namespace smoothcert::net {

namespace {

[[noreturn]] void throw_errno(const char* what) { throw std::system_error(errno, std::generic_category(), what); }

void write_all(int fd, const std::uint8_t* p, std::size_t n) {
  while (n > 0) {
    const ssize_t rv = ::send(fd, p, n, MSG_NOSIGNAL);
    if (rv < 0) {
      if (errno == EINTR) continue;
      throw_errno("send");
    }
    p += rv;
    n -= static_cast<std::size_t>(rv);
  }
}

// false on EOF before any byte was read
bool read_exact(int fd, std::uint8_t* p, std::size_t n) {
  std::size_t got = 0;
  while (got < n) {
    const ssize_t rv = ::recv(fd, p + got, n - got, 0);
    if (rv < 0) {
      if (errno == EINTR) continue;
      throw_errno("recv");
    }
    if (rv == 0) {
      if (got == 0) return false;
      throw std::system_error(ECONNRESET, std::generic_category(), "connection closed mid-frame");
    }
    got += static_cast<std::size_t>(rv);
  }
  return true;
}

}  // namespace

Socket& Socket::operator=(Socket&& other) noexcept {
  if (this != &other) {
    close();
    fd_ = std::exchange(other.fd_, -1);
  }
  return *this;
}

Socket::~Socket() { close(); }

void Socket::close() noexcept {
  if (fd_ >= 0) {
    ::close(fd_);
    fd_ = -1;
  }
}

void Socket::shutdown() noexcept {
  if (fd_ >= 0) ::shutdown(fd_, SHUT_RDWR);
}

void Socket::send_frame(std::span<const std::uint8_t> payload) const {
  const auto bytes = protocol::frame(payload);
  write_all(fd_, bytes.data(), bytes.size());
}

void Socket::send_frame(std::string_view payload) const {
  send_frame(std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(payload.data()), payload.size()));
}

std::optional<std::vector<std::uint8_t>> Socket::recv_frame() const {
  std::uint8_t header[4];
  if (!read_exact(fd_, header, 4)) return std::nullopt;
  const std::uint32_t len = static_cast<std::uint32_t>(header[0]) | (static_cast<std::uint32_t>(header[1]) << 8) |
                            (static_cast<std::uint32_t>(header[2]) << 16) |
                            (static_cast<std::uint32_t>(header[3]) << 24);
  if (len > protocol::kMaxFrameBytes) throw InvalidInput("incoming frame exceeds size limit");
  std::vector<std::uint8_t> payload(len);
  if (len > 0 && !read_exact(fd_, payload.data(), len)) {
    throw std::system_error(ECONNRESET, std::generic_category(), "connection closed mid-frame");
  }
  return payload;
}

Socket connect_tcp(const std::string& host, std::uint16_t port, std::chrono::milliseconds timeout) {
  addrinfo hints{};
  hints.ai_family = AF_UNSPEC;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  const std::string service = std::to_string(port);
  if (const int rc = ::getaddrinfo(host.c_str(), service.c_str(), &hints, &res); rc != 0) {
    throw std::system_error(EHOSTUNREACH, std::generic_category(), "resolve " + host + ": " + gai_strerror(rc));
  }
  int last_errno = ECONNREFUSED;
  for (addrinfo* ai = res; ai != nullptr; ai = ai->ai_next) {
    Socket s(::socket(ai->ai_family, ai->ai_socktype, ai->ai_protocol));
    if (!s.valid()) {
      last_errno = errno;
      continue;
    }
    if (timeout.count() > 0) {
      timeval tv{};
      tv.tv_sec = static_cast<time_t>(timeout.count() / 1000);
      tv.tv_usec = static_cast<suseconds_t>((timeout.count() % 1000) * 1000);
      ::setsockopt(s.fd(), SOL_SOCKET, SO_RCVTIMEO, &tv, sizeof tv);
      ::setsockopt(s.fd(), SOL_SOCKET, SO_SNDTIMEO, &tv, sizeof tv);
    }
    if (::connect(s.fd(), ai->ai_addr, ai->ai_addrlen) == 0) {
      int one = 1;
      ::setsockopt(s.fd(), IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
      ::freeaddrinfo(res);
      return s;
    }
    last_errno = errno;
  }
  ::freeaddrinfo(res);
  throw std::system_error(last_errno, std::generic_category(), "connect " + host + ":" + service);
}

Socket listen_tcp(const std::string& host, std::uint16_t port) {
  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_STREAM;
  hints.ai_flags = AI_PASSIVE;
  addrinfo* res = nullptr;
  const std::string service = std::to_string(port);
  if (const int rc = ::getaddrinfo(host.c_str(), service.c_str(), &hints, &res); rc != 0) {
    throw std::system_error(EINVAL, std::generic_category(), std::string("resolve: ") + gai_strerror(rc));
  }
  Socket s(::socket(res->ai_family, res->ai_socktype, res->ai_protocol));
  if (!s.valid()) {
    ::freeaddrinfo(res);
    throw_errno("socket");
  }
  int one = 1;
  ::setsockopt(s.fd(), SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
  if (::bind(s.fd(), res->ai_addr, res->ai_addrlen) != 0 || ::listen(s.fd(), 64) != 0) {
    ::freeaddrinfo(res);
    throw_errno("bind/listen");
  }
  ::freeaddrinfo(res);
  return s;
}

std::uint16_t local_port(const Socket& s) {
  sockaddr_in addr{};
  socklen_t len = sizeof addr;
  if (::getsockname(s.fd(), reinterpret_cast<sockaddr*>(&addr), &len) != 0) throw_errno("getsockname");
  return ntohs(addr.sin_port);
}

Socket accept(const Socket& listener) {
  for (;;) {
    const int fd = ::accept(listener.fd(), nullptr, nullptr);
    if (fd >= 0) {
      int one = 1;
      ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
      return Socket(fd);
    }
    if (errno == EINTR) continue;
    return Socket();
  }
}

std::pair<std::string, std::uint16_t> parse_endpoint(const std::string& endpoint) {
  const auto colon = endpoint.rfind(':');
  if (colon == std::string::npos || colon == 0 || colon + 1 == endpoint.size()) {
    throw InvalidInput("endpoint must look like host:port, got '" + endpoint + "'");
  }
  const std::string port_text = endpoint.substr(colon + 1);
  std::size_t used = 0;
  unsigned long port = 0;
  try {
    port = std::stoul(port_text, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != port_text.size() || port == 0 || port > 65535) throw InvalidInput("bad port in '" + endpoint + "'");
  return {endpoint.substr(0, colon), static_cast<std::uint16_t>(port)};
}

}  // namespace smoothcert::net
