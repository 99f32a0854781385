#include "smoothcert/noise.hpp"

#include <cmath>
#include <limits>
#include <numbers>

#include "smoothcert/error.hpp"

namespace smoothcert {

namespace philox {

namespace {

constexpr std::uint32_t kM0 = 0xD2511F53u;
constexpr std::uint32_t kM1 = 0xCD9E8D57u;
constexpr std::uint32_t kW0 = 0x9E3779B9u;
constexpr std::uint32_t kW1 = 0xBB67AE85u;

inline void mulhilo(std::uint32_t a, std::uint32_t b, std::uint32_t& hi, std::uint32_t& lo) noexcept {
  const std::uint64_t p = static_cast<std::uint64_t>(a) * b;
  hi = static_cast<std::uint32_t>(p >> 32);
  lo = static_cast<std::uint32_t>(p);
}

inline Counter round(const Counter& c, const Key& k) noexcept {
  std::uint32_t hi0, lo0, hi1, lo1;
  mulhilo(kM0, c[0], hi0, lo0);
  mulhilo(kM1, c[2], hi1, lo1);
  return {hi1 ^ c[1] ^ k[0], lo1, hi0 ^ c[3] ^ k[1], lo0};
}

}  // namespace

Counter philox4x32_10(Counter ctr, Key key) noexcept {
  for (int r = 0; r < 10; ++r) {
    if (r > 0) {
      key[0] += kW0;
      key[1] += kW1;
    }
    ctr = round(ctr, key);
  }
  return ctr;
}

}  // namespace philox

namespace {

constexpr std::uint64_t kMaxKeyField = std::numeric_limits<std::uint32_t>::max();

inline double to_unit_open(std::uint32_t hi, std::uint32_t lo) noexcept {
  const std::uint64_t bits = ((static_cast<std::uint64_t>(hi) << 32) | lo) >> 11;
  return (static_cast<double>(bits) + 0.5) * 0x1.0p-53;
}

void check_key(const SampleKey& key) {
  if (key.input_id > kMaxKeyField || key.patch_index > kMaxKeyField || key.noise_index > kMaxKeyField) {
    throw InvalidInput("sample key fields must fit in 32 bits");
  }
}

// Fills out[i] = sigma * N(0,1) for the stream addressed by key.
template <typename Sink>
void generate(const NoiseSpec& spec, const SampleKey& key, std::size_t count, Sink&& sink) {
  spec.validate();
  check_key(key);
  if (count == 0) throw InvalidInput("noise requested for an empty shape");
  const philox::Key k{static_cast<std::uint32_t>(spec.base_seed), static_cast<std::uint32_t>(spec.base_seed >> 32)};
  const auto noise = static_cast<std::uint32_t>(key.noise_index);
  const auto patch = static_cast<std::uint32_t>(key.patch_index);
  const auto input = static_cast<std::uint32_t>(key.input_id);
  if (count / 2 + 1 > kMaxKeyField) throw InvalidInput("noise tensor too large");
  for (std::size_t e = 0; e < count; e += 2) {
    const auto block = static_cast<std::uint32_t>(e / 2);
    const auto r = philox::philox4x32_10({block, noise, patch, input}, k);
    const double u1 = to_unit_open(r[0], r[1]);
    const double u2 = to_unit_open(r[2], r[3]);
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * std::numbers::pi * u2;
    sink(e, spec.sigma * radius * std::cos(theta));
    if (e + 1 < count) sink(e + 1, spec.sigma * radius * std::sin(theta));
  }
}

}  // namespace

void NoiseSpec::validate() const {
  if (!(sigma > 0.0) || !std::isfinite(sigma)) throw InvalidInput("noise sigma must be positive and finite");
}

InputTensor gaussian_noise(const NoiseSpec& spec, const SampleKey& key, const Shape& shape) {
  std::vector<float> out(shape.elements());
  generate(spec, key, out.size(), [&](std::size_t i, double v) { out[i] = static_cast<float>(v); });
  return InputTensor(shape, std::move(out));
}

InputTensor shared_noise(const NoiseSpec& spec, const SampleKey& key, const Shape& shape) {
  SampleKey k = key;
  k.patch_index = 0;
  return gaussian_noise(spec, k, shape);
}

InputTensor add_noise(const InputTensor& x, const NoiseSpec& spec, SampleKey key, NoiseMode mode) {
  if (mode == NoiseMode::shared) key.patch_index = 0;
  auto src = x.data();
  std::vector<float> out(src.begin(), src.end());
  generate(spec, key, out.size(), [&](std::size_t i, double v) {
    out[i] += static_cast<float>(v);
  });
  return InputTensor(x.shape(), std::move(out));
}

}  // namespace smoothcert
