#pragma once

// Classifier wire protocol, version 1.
//
// Every message on the stream is [u32 LE length][payload]. The first
// exchange is a JSON hello; after that the client sends binary inference
// requests and the server answers with binary responses or a JSON error.
//
//   request  payload: u64 seq | u32 batch | u32 elem_count | batch*elem_count f32
//   response payload: u64 seq | u32 batch | batch*n_classes f32
//   error    payload: {"op":"error","seq":S,"message":"..."}
//
// All integers and floats are little-endian. Error replies are told apart by
// a leading '{'. Clients never issue a seq whose low byte is 0x7b so a binary
// response cannot start with that byte.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "smoothcert/tensor.hpp"

namespace smoothcert::protocol {

inline constexpr std::uint32_t kVersion = 1;
inline constexpr std::uint32_t kMaxFrameBytes = 1u << 30;

using Bytes = std::vector<std::uint8_t>;

/// Prefixes the payload with its 4-byte little-endian length.
Bytes frame(std::span<const std::uint8_t> payload);

struct Hello {
  std::uint32_t version = kVersion;
};

struct HelloReply {
  std::uint32_t version = kVersion;
  std::size_t n_classes = 0;
  Shape input_shape{};
};

struct InferenceRequest {
  std::uint64_t seq = 0;
  std::uint32_t batch = 0;
  std::uint32_t elem_count = 0;
  std::vector<float> data;  // batch * elem_count, row-major per input
};

struct InferenceResponse {
  std::uint64_t seq = 0;
  std::uint32_t batch = 0;
  std::vector<float> logits;  // batch * n_classes
};

struct ErrorReply {
  std::optional<std::uint64_t> seq;
  std::string message;
};

std::string encode_hello(const Hello& h);
std::string encode_hello_reply(const HelloReply& r);
Hello decode_hello(std::string_view payload);
HelloReply decode_hello_reply(std::string_view payload);

Bytes encode_request(const InferenceRequest& r);
InferenceRequest decode_request(std::span<const std::uint8_t> payload);

Bytes encode_response(const InferenceResponse& r);
/// n_classes is implied by the payload length and batch.
InferenceResponse decode_response(std::span<const std::uint8_t> payload);

std::string encode_error(const ErrorReply& e);

/// Returns the error when the payload is a JSON error object.
std::optional<ErrorReply> as_error(std::span<const std::uint8_t> payload);

/// Packs inputs of identical shape into a request.
InferenceRequest make_request(std::uint64_t seq, std::span<const InputTensor> inputs);

}  // namespace smoothcert::protocol
