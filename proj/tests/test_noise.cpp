#include <algorithm>
#include <cmath>
#include <set>

#include "doctest.h"
#include "oracles.hpp"
#include "smoothcert/error.hpp"
#include "smoothcert/noise.hpp"

using namespace smoothcert;

TEST_CASE("philox4x32-10 reproduces the Random123 known-answer vectors") {
  using philox::Counter;
  CHECK(philox::philox4x32_10(Counter{0, 0, 0, 0}, {0, 0}) ==
        Counter{0x6627e8d5, 0xe169c58d, 0xbc57ac4c, 0x9b00dbd8});
  CHECK(philox::philox4x32_10(Counter{0xffffffff, 0xffffffff, 0xffffffff, 0xffffffff}, {0xffffffff, 0xffffffff}) ==
        Counter{0x408f276d, 0x41c83b0e, 0xa20bc7c6, 0x6d5451fd});
  CHECK(philox::philox4x32_10(Counter{0x243f6a88, 0x85a308d3, 0x13198a2e, 0x03707344}, {0xa4093822, 0x299f31d0}) ==
        Counter{0xd16cfe09, 0x94fdcceb, 0x5001e420, 0x24126ea1});
}

TEST_CASE("noise is a pure function of seed and key") {
  const NoiseSpec spec{0.5, 42};
  const Shape shape{3, 8, 8};
  const auto a = gaussian_noise(spec, {7, 2, 9}, shape);
  const auto b = gaussian_noise(spec, {7, 2, 9}, shape);
  CHECK(a == b);
  CHECK_FALSE(a == gaussian_noise(spec, {7, 2, 10}, shape));
  CHECK_FALSE(a == gaussian_noise(spec, {7, 3, 9}, shape));
  CHECK_FALSE(a == gaussian_noise(spec, {8, 2, 9}, shape));
  CHECK_FALSE(a == gaussian_noise(NoiseSpec{0.5, 43}, {7, 2, 9}, shape));
}

TEST_CASE("element values do not depend on the order keys are generated in") {
  const NoiseSpec spec{1.0, 5};
  const Shape shape{1, 4, 4};
  std::vector<InputTensor> forward, backward;
  for (std::uint64_t j = 0; j < 20; ++j) forward.push_back(gaussian_noise(spec, {0, 0, j}, shape));
  for (std::uint64_t j = 20; j-- > 0;) backward.push_back(gaussian_noise(spec, {0, 0, j}, shape));
  std::reverse(backward.begin(), backward.end());
  CHECK(forward == backward);
}

TEST_CASE("noise moments, independence and distribution at sigma 0.5") {
  const NoiseSpec spec{0.5, 2024};
  const Shape shape{1, 1000, 1000};
  const auto z = gaussian_noise(spec, {0, 0, 0}, shape);
  const auto d = z.data();
  const double n = static_cast<double>(d.size());

  double sum = 0.0, sq = 0.0, lag = 0.0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    sum += d[i];
    sq += static_cast<double>(d[i]) * d[i];
    if (i + 1 < d.size()) lag += static_cast<double>(d[i]) * d[i + 1];
  }
  const double mean = sum / n;
  const double sd = std::sqrt(sq / n - mean * mean);
  // 3 standard errors: 3 * 0.5 / 1000 for the mean, about 3 * 0.5 / sqrt(2e6) for the sd
  CHECK(std::abs(mean) <= 0.002);
  CHECK(sd >= 0.4985);
  CHECK(sd <= 0.5015);
  // adjacent elements share a Philox call (cos/sin pair) so check them too
  CHECK(std::abs(lag / (n - 1)) / 0.25 < 5.0 / 1000.0);

  std::vector<double> sorted(d.begin(), d.end());
  std::sort(sorted.begin(), sorted.end());
  double ks = 0.0;
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    const double f = static_cast<double>(oracle::phi(sorted[i] / 0.5L));
    ks = std::max({ks, std::abs(f - i / n), std::abs(f - (i + 1) / n)});
  }
  CHECK(ks < 0.006);
}

double pearson(std::span<const float> a, std::span<const float> b) {
  const double n = static_cast<double>(a.size());
  double ma = 0, mb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= n;
  mb /= n;
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

TEST_CASE("distinct keys give uncorrelated tensors") {
  const NoiseSpec spec{1.0, 77};
  const Shape shape{1, 100, 1000};
  const auto a = gaussian_noise(spec, {1, 0, 0}, shape);
  for (const SampleKey other : {SampleKey{1, 1, 0}, SampleKey{1, 0, 1}, SampleKey{2, 0, 0}}) {
    const auto b = gaussian_noise(spec, other, shape);
    const double r = pearson(a.data(), b.data());
    CHECK(r >= -0.01);
    CHECK(r <= 0.01);
  }
}

TEST_CASE("shared mode gives every patch the same draw") {
  const NoiseSpec spec{0.25, 3};
  const Shape shape{3, 4, 4};
  const auto x = InputTensor::filled(shape, 0.5f);
  const auto p0 = add_noise(x, spec, {4, 0, 11}, NoiseMode::shared);
  const auto p5 = add_noise(x, spec, {4, 5, 11}, NoiseMode::shared);
  CHECK(p0 == p5);
  CHECK(shared_noise(spec, {4, 9, 11}, shape) == gaussian_noise(spec, {4, 0, 11}, shape));
  CHECK_FALSE(add_noise(x, spec, {4, 5, 11}, NoiseMode::independent) == p0);
}

TEST_CASE("add_noise adds exactly the generated tensor") {
  const NoiseSpec spec{0.25, 8};
  const Shape shape{1, 3, 3};
  const auto x = InputTensor(shape, {0.f, .1f, .2f, .3f, .4f, .5f, .6f, .7f, .8f});
  const auto z = gaussian_noise(spec, {0, 0, 0}, shape);
  const auto y = add_noise(x, spec, {0, 0, 0}, NoiseMode::independent);
  for (std::size_t i = 0; i < 9; ++i) CHECK(y.data()[i] == x.data()[i] + z.data()[i]);
}

TEST_CASE("bad noise requests are rejected") {
  CHECK_THROWS_AS(NoiseSpec({0.0, 1}).validate(), InvalidInput);
  CHECK_THROWS_AS(NoiseSpec({-1.0, 1}).validate(), InvalidInput);
  CHECK_THROWS_AS(gaussian_noise(NoiseSpec{}, {0, 0, 0}, Shape{0, 1, 1}), InvalidInput);
  CHECK_THROWS(gaussian_noise(NoiseSpec{}, {1ull << 33, 0, 0}, Shape{1, 1, 1}));
}
