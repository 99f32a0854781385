#include "smoothcert/remote.hpp"

#include <system_error>

#include "smoothcert/error.hpp"

namespace smoothcert {

namespace {

protocol::HelloReply handshake(const net::Socket& s) {
  s.send_frame(protocol::encode_hello(protocol::Hello{}));
  auto reply = s.recv_frame();
  if (!reply) throw std::system_error(ECONNRESET, std::generic_category(), "server closed during handshake");
  const std::string_view text(reinterpret_cast<const char*>(reply->data()), reply->size());
  protocol::HelloReply hello;
  try {
    hello = protocol::decode_hello_reply(text);
  } catch (const InvalidInput& e) {
    throw TransportError(e.what(), 0, 1, false);
  }
  if (hello.version != protocol::kVersion) {
    throw TransportError("server speaks protocol version " + std::to_string(hello.version) + ", expected " +
                             std::to_string(protocol::kVersion),
                         0, 1, false);
  }
  return hello;
}

}  // namespace

RemoteClassifier::RemoteClassifier(std::string host, std::uint16_t port, Options options)
    : host_(std::move(host)), port_(port), options_(options) {
  if (options_.max_batch == 0 || options_.pool_size == 0) throw InvalidInput("max_batch and pool_size must be positive");
  net::Socket first;
  try {
    first = net::connect_tcp(host_, port_, options_.timeout);
    hello_ = handshake(first);
  } catch (const std::system_error& e) {
    throw TransportError(std::string("cannot reach model server: ") + e.what(), 0, 1, true);
  }
  if (hello_.n_classes < 2 || hello_.input_shape.elements() == 0) {
    throw TransportError("server advertised an unusable model", 0, 1, false);
  }
  open_ = 1;
  idle_.push_back(std::move(first));
}

std::string RemoteClassifier::describe() const {
  return "remote:" + host_ + ":" + std::to_string(port_) + hello_.input_shape.str() + "x" +
         std::to_string(hello_.n_classes);
}

net::Socket RemoteClassifier::open_connection() const {
  net::Socket s = net::connect_tcp(host_, port_, options_.timeout);
  const auto hello = handshake(s);
  if (hello.n_classes != hello_.n_classes || hello.input_shape != hello_.input_shape) {
    throw TransportError("server model changed between connections", 0, 1, false);
  }
  return s;
}

net::Socket RemoteClassifier::acquire() const {
  std::unique_lock lock(mu_);
  for (;;) {
    if (!idle_.empty()) {
      net::Socket s = std::move(idle_.back());
      idle_.pop_back();
      return s;
    }
    if (open_ < options_.pool_size) {
      ++open_;
      lock.unlock();
      try {
        return open_connection();
      } catch (...) {
        discard();
        throw;
      }
    }
    cv_.wait(lock);
  }
}

void RemoteClassifier::release(net::Socket s) const {
  {
    std::lock_guard lock(mu_);
    idle_.push_back(std::move(s));
  }
  cv_.notify_one();
}

void RemoteClassifier::discard() const {
  {
    std::lock_guard lock(mu_);
    --open_;
  }
  cv_.notify_one();
}

std::uint64_t RemoteClassifier::next_seq() const {
  for (;;) {
    const std::uint64_t s = seq_.fetch_add(1);
    if ((s & 0xffu) != '{') return s;
  }
}

std::vector<LogitVector> RemoteClassifier::round_trip(std::span<const InputTensor> inputs) const {
  const std::uint64_t seq = next_seq();
  const auto request = protocol::encode_request(protocol::make_request(seq, inputs));
  for (int attempt = 1;; ++attempt) {
    net::Socket conn;
    try {
      conn = acquire();
      conn.send_frame(request);
      requests_.fetch_add(1);
      auto payload = conn.recv_frame();
      if (!payload) throw std::system_error(ECONNRESET, std::generic_category(), "server closed connection");
      if (auto err = protocol::as_error(*payload)) {
        release(std::move(conn));
        throw TransportError("model server error: " + err->message, seq, attempt, false);
      }
      const auto response = protocol::decode_response(*payload);
      if (response.seq != seq) {
        throw TransportError("response seq " + std::to_string(response.seq) + " does not match request " +
                                 std::to_string(seq),
                             seq, attempt, false);
      }
      if (response.batch != inputs.size() || response.logits.size() != inputs.size() * hello_.n_classes) {
        throw TransportError("response shape does not match request", seq, attempt, false);
      }
      release(std::move(conn));
      std::vector<LogitVector> out;
      out.reserve(inputs.size());
      for (std::size_t i = 0; i < inputs.size(); ++i) {
        const float* row = response.logits.data() + i * hello_.n_classes;
        out.emplace_back(std::vector<double>(row, row + hello_.n_classes));
      }
      return out;
    } catch (const std::system_error& e) {
      if (conn.valid()) {
        conn.close();
        discard();
      }
      if (attempt > options_.max_retries) {
        throw TransportError(std::string("transport failure: ") + e.what(), seq, attempt, true);
      }
    } catch (const TransportError&) {
      if (conn.valid()) {
        conn.close();
        discard();
      }
      throw;
    }
  }
}

std::vector<LogitVector> RemoteClassifier::infer(std::span<const InputTensor> inputs) const {
  std::vector<LogitVector> out;
  out.reserve(inputs.size());
  for (std::size_t start = 0; start < inputs.size(); start += options_.max_batch) {
    const std::size_t len = std::min(options_.max_batch, inputs.size() - start);
    auto part = round_trip(inputs.subspan(start, len));
    for (auto& l : part) out.push_back(std::move(l));
  }
  return out;
}

protocol::HelloReply serve_check(const std::string& host, std::uint16_t port, std::chrono::milliseconds timeout) {
  try {
    net::Socket s = net::connect_tcp(host, port, timeout);
    return handshake(s);
  } catch (const std::system_error& e) {
    throw TransportError(std::string("cannot reach model server: ") + e.what(), 0, 1, true);
  }
}

}  // namespace smoothcert
