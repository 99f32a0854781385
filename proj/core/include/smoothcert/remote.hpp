#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <mutex>
#include <string>
#include <vector>

#include "smoothcert/classifiers.hpp"
#include "smoothcert/net.hpp"
#include "smoothcert/protocol.hpp"

namespace smoothcert {

/// Client for a model server speaking the length-prefixed classifier
/// protocol. Batches are split at max_batch; each sub-batch is one
/// synchronous request/response on a pooled connection, matched by seq.
class RemoteClassifier final : public ClassifierBackend {
 public:
  struct Options {
    std::size_t max_batch = 256;
    std::size_t pool_size = 4;
    int max_retries = 2;
    std::chrono::milliseconds timeout{60000};
  };

  /// Connects and performs the handshake; throws TransportError when the
  /// server is unreachable or speaks another protocol version.
  RemoteClassifier(std::string host, std::uint16_t port, Options options);
  RemoteClassifier(std::string host, std::uint16_t port) : RemoteClassifier(std::move(host), port, Options{}) {}

  std::size_t n_classes() const override { return hello_.n_classes; }
  Shape input_shape() const override { return hello_.input_shape; }
  std::string describe() const override;

  /// Requests issued so far (for diagnostics and tests).
  std::uint64_t requests_sent() const noexcept { return requests_.load(); }

 protected:
  std::vector<LogitVector> infer(std::span<const InputTensor> inputs) const override;

 private:
  net::Socket open_connection() const;
  net::Socket acquire() const;
  void release(net::Socket s) const;
  void discard() const;
  std::uint64_t next_seq() const;
  std::vector<LogitVector> round_trip(std::span<const InputTensor> inputs) const;

  std::string host_;
  std::uint16_t port_;
  Options options_;
  protocol::HelloReply hello_;

  mutable std::mutex mu_;
  mutable std::condition_variable cv_;
  mutable std::vector<net::Socket> idle_;
  mutable std::size_t open_ = 0;
  mutable std::atomic<std::uint64_t> seq_{1};
  mutable std::atomic<std::uint64_t> requests_{0};
};

/// Connects, exchanges hellos and returns the server's advertisement.
protocol::HelloReply serve_check(const std::string& host, std::uint16_t port,
                                 std::chrono::milliseconds timeout = std::chrono::milliseconds(5000));

}  // namespace smoothcert
