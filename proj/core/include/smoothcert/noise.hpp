#pragma once

#include <array>
#include <cstdint>

#include "smoothcert/tensor.hpp"

namespace smoothcert {

/// Isotropic Gaussian smoothing noise N(0, sigma^2 I) keyed by a 64-bit seed.
struct NoiseSpec {
  double sigma = 0.25;
  std::uint64_t base_seed = 0;

  void validate() const;
};

/// Identifies one noise tensor: which input, which patch of its ensemble,
/// which Monte Carlo draw. Each field must fit in 32 bits.
struct SampleKey {
  std::uint64_t input_id = 0;
  std::uint64_t patch_index = 0;
  std::uint64_t noise_index = 0;
};

enum class NoiseMode {
  independent,  // fresh draw per (patch, sample)
  shared,       // one draw per sample, reused across patches
};

namespace philox {

using Counter = std::array<std::uint32_t, 4>;
using Key = std::array<std::uint32_t, 2>;

/// Philox4x32 with 10 rounds (Salmon et al., Random123).
Counter philox4x32_10(Counter ctr, Key key) noexcept;

}  // namespace philox

/// Noise tensor for `key`. Element e is a pure function of
/// (base_seed, key, e): Philox4x32-10 over the counter
/// [e/2, noise_index, patch_index, input_id] with key = base_seed yields two
/// 53-bit uniforms, which a Box-Muller transform maps to the normal pair
/// (cos branch for even e, sin branch for odd e).
InputTensor gaussian_noise(const NoiseSpec& spec, const SampleKey& key, const Shape& shape);

/// Same as gaussian_noise with patch_index forced to 0, so every patch of a
/// given (input_id, noise_index) sees the same tensor.
InputTensor shared_noise(const NoiseSpec& spec, const SampleKey& key, const Shape& shape);

/// x + z with z drawn as above; mode selects independent or shared keying.
InputTensor add_noise(const InputTensor& x, const NoiseSpec& spec, SampleKey key, NoiseMode mode);

}  // namespace smoothcert
