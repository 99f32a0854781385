#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace smoothcert {

/// Base of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed values: non-finite logits, shape mismatches, empty shapes.
class InvalidInput : public Error {
 public:
  using Error::Error;
};

/// A patch, sub-video or certification spec that cannot be satisfied.
class SpecError : public Error {
 public:
  using Error::Error;
};

/// Classifier whose decision function is constant (e.g. zero weight difference).
class DegenerateClassifier : public Error {
 public:
  using Error::Error;
};

/// Requested data was not retained (e.g. histogram traces).
class Unavailable : public Error {
 public:
  using Error::Error;
};

class LoadError : public Error {
 public:
  using Error::Error;
};

/// Remote backend failure. Carries enough metadata for the caller to decide
/// whether to retry.
class TransportError : public Error {
 public:
  TransportError(const std::string& what, std::uint64_t seq, int attempts, bool retryable)
      : Error(what), seq_(seq), attempts_(attempts), retryable_(retryable) {}

  std::uint64_t seq() const noexcept { return seq_; }
  int attempts() const noexcept { return attempts_; }
  bool retryable() const noexcept { return retryable_; }

 private:
  std::uint64_t seq_;
  int attempts_;
  bool retryable_;
};

}  // namespace smoothcert
