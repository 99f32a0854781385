#include "smoothcert/protocol.hpp"

#include <bit>
#include <cstring>

#include "json.hpp"
#include "smoothcert/error.hpp"

namespace smoothcert::protocol {

namespace {

using nlohmann::json;

static_assert(std::endian::native == std::endian::little, "wire codec assumes a little-endian host");

template <typename T>
void put(Bytes& out, T v) {
  std::uint8_t raw[sizeof(T)];
  std::memcpy(raw, &v, sizeof(T));
  out.insert(out.end(), raw, raw + sizeof(T));
}

template <typename T>
T get(std::span<const std::uint8_t> in, std::size_t offset) {
  T v;
  std::memcpy(&v, in.data() + offset, sizeof(T));
  return v;
}

json parse_object(std::string_view payload, const char* what) {
  json j = json::parse(payload, nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw InvalidInput(std::string("malformed ") + what + " payload");
  return j;
}

}  // namespace

Bytes frame(std::span<const std::uint8_t> payload) {
  if (payload.size() > kMaxFrameBytes) throw InvalidInput("frame payload too large");
  Bytes out;
  out.reserve(4 + payload.size());
  put<std::uint32_t>(out, static_cast<std::uint32_t>(payload.size()));
  out.insert(out.end(), payload.begin(), payload.end());
  return out;
}

std::string encode_hello(const Hello& h) { return json{{"op", "hello"}, {"version", h.version}}.dump(); }

std::string encode_hello_reply(const HelloReply& r) {
  json j;
  j["op"] = "hello";
  j["version"] = r.version;
  j["n_classes"] = r.n_classes;
  j["input_shape"] = {r.input_shape.channels, r.input_shape.height, r.input_shape.width};
  return j.dump();
}

Hello decode_hello(std::string_view payload) {
  const json j = parse_object(payload, "hello");
  if (j.value("op", "") != "hello" || !j.contains("version")) throw InvalidInput("not a hello message");
  return Hello{j.at("version").get<std::uint32_t>()};
}

HelloReply decode_hello_reply(std::string_view payload) {
  const json j = parse_object(payload, "hello reply");
  if (j.value("op", "") == "error") throw InvalidInput("server rejected hello: " + j.value("message", ""));
  if (j.value("op", "") != "hello") throw InvalidInput("not a hello reply");
  HelloReply r;
  try {
    r.version = j.at("version").get<std::uint32_t>();
    r.n_classes = j.at("n_classes").get<std::size_t>();
    const auto shape = j.at("input_shape").get<std::vector<std::size_t>>();
    if (shape.size() != 3) throw InvalidInput("input_shape must have 3 entries");
    r.input_shape = Shape{shape[0], shape[1], shape[2]};
  } catch (const json::exception& e) {
    throw InvalidInput(std::string("malformed hello reply: ") + e.what());
  }
  return r;
}

Bytes encode_request(const InferenceRequest& r) {
  if (r.data.size() != static_cast<std::size_t>(r.batch) * r.elem_count) {
    throw InvalidInput("request data length does not match batch x elem_count");
  }
  Bytes out;
  out.reserve(16 + 4 * r.data.size());
  put(out, r.seq);
  put(out, r.batch);
  put(out, r.elem_count);
  for (float v : r.data) put(out, v);
  return out;
}

InferenceRequest decode_request(std::span<const std::uint8_t> payload) {
  if (payload.size() < 16) throw InvalidInput("request shorter than its header");
  InferenceRequest r;
  r.seq = get<std::uint64_t>(payload, 0);
  r.batch = get<std::uint32_t>(payload, 8);
  r.elem_count = get<std::uint32_t>(payload, 12);
  const std::size_t n = static_cast<std::size_t>(r.batch) * r.elem_count;
  if (payload.size() != 16 + 4 * n) throw InvalidInput("request body length does not match header");
  r.data.resize(n);
  std::memcpy(r.data.data(), payload.data() + 16, 4 * n);
  return r;
}

Bytes encode_response(const InferenceResponse& r) {
  if (r.batch == 0 ? !r.logits.empty() : r.logits.size() % r.batch != 0) {
    throw InvalidInput("response logits not divisible by batch");
  }
  Bytes out;
  out.reserve(12 + 4 * r.logits.size());
  put(out, r.seq);
  put(out, r.batch);
  for (float v : r.logits) put(out, v);
  return out;
}

InferenceResponse decode_response(std::span<const std::uint8_t> payload) {
  if (payload.size() < 12) throw InvalidInput("response shorter than its header");
  InferenceResponse r;
  r.seq = get<std::uint64_t>(payload, 0);
  r.batch = get<std::uint32_t>(payload, 8);
  const std::size_t body = payload.size() - 12;
  if (body % 4 != 0 || (r.batch == 0 ? body != 0 : (body / 4) % r.batch != 0)) {
    throw InvalidInput("response body length does not match batch");
  }
  r.logits.resize(body / 4);
  std::memcpy(r.logits.data(), payload.data() + 12, body);
  return r;
}

std::string encode_error(const ErrorReply& e) {
  json j;
  j["op"] = "error";
  if (e.seq) {
    j["seq"] = *e.seq;
  } else {
    j["seq"] = nullptr;
  }
  j["message"] = e.message;
  return j.dump();
}

std::optional<ErrorReply> as_error(std::span<const std::uint8_t> payload) {
  if (payload.empty() || payload[0] != '{') return std::nullopt;
  const std::string_view text(reinterpret_cast<const char*>(payload.data()), payload.size());
  json j = json::parse(text, nullptr, false);
  if (j.is_discarded() || !j.is_object() || j.value("op", "") != "error") return std::nullopt;
  ErrorReply e;
  if (j.contains("seq") && j["seq"].is_number_unsigned()) e.seq = j["seq"].get<std::uint64_t>();
  e.message = j.value("message", "");
  return e;
}

InferenceRequest make_request(std::uint64_t seq, std::span<const InputTensor> inputs) {
  InferenceRequest r;
  r.seq = seq;
  r.batch = static_cast<std::uint32_t>(inputs.size());
  r.elem_count = inputs.empty() ? 0 : static_cast<std::uint32_t>(inputs.front().size());
  r.data.reserve(static_cast<std::size_t>(r.batch) * r.elem_count);
  for (const auto& x : inputs) {
    if (x.size() != r.elem_count) throw InvalidInput("request inputs must share one shape");
    r.data.insert(r.data.end(), x.data().begin(), x.data().end());
  }
  return r;
}

}  // namespace smoothcert::protocol
