#include <atomic>
#include <cmath>
#include <random>

#include "doctest.h"
#include "oracles.hpp"
#include "smoothcert/backend_spec.hpp"
#include "smoothcert/classifiers.hpp"
#include "smoothcert/error.hpp"
#include "smoothcert/noise.hpp"

using namespace smoothcert;

namespace {

/// Wraps a backend and counts the inputs it sees.
class CountingBackend final : public ClassifierBackend {
 public:
  explicit CountingBackend(std::shared_ptr<const ClassifierBackend> inner) : inner_(std::move(inner)) {}
  std::size_t n_classes() const override { return inner_->n_classes(); }
  Shape input_shape() const override { return inner_->input_shape(); }
  std::string describe() const override { return "counting"; }
  std::size_t seen() const { return seen_.load(); }

 protected:
  std::vector<LogitVector> infer(std::span<const InputTensor> inputs) const override {
    seen_ += inputs.size();
    return infer_batch(*inner_, inputs);
  }

 private:
  std::shared_ptr<const ClassifierBackend> inner_;
  mutable std::atomic<std::size_t> seen_{0};
};

LinearClassifier two_class_linear() {
  // w0 - w1 = (1, 2, 2)/... has norm 3
  return LinearClassifier(Shape{1, 1, 3}, {{1.0, 2.0, 2.0}, {0.0, 0.0, 0.0}}, {0.0, 0.0});
}

}  // namespace

TEST_CASE("linear classifier computes w.x + b") {
  LinearClassifier c(Shape{1, 1, 2}, {{1.0, -1.0}, {0.5, 0.5}, {0.0, 2.0}}, {0.1, 0.0, -1.0});
  const InputTensor x(Shape{1, 1, 2}, {0.25f, 0.75f});
  const auto out = infer_batch(c, std::vector<InputTensor>{x}).front();
  CHECK(out[0] == doctest::Approx(0.1 + 0.25 - 0.75));
  CHECK(out[1] == doctest::Approx(0.5));
  CHECK(out[2] == doctest::Approx(0.5));
}

TEST_CASE("prototype classifier prefers the nearest prototype") {
  PrototypeClassifier c(Shape{1, 1, 2}, {{0.0, 0.0}, {1.0, 1.0}}, 0.5);
  const auto out = infer_batch(c, std::vector<InputTensor>{InputTensor(Shape{1, 1, 2}, {0.9f, 0.8f})}).front();
  CHECK(out[1] > out[0]);
  CHECK(out[0] == doctest::Approx(-(0.81 + 0.64) / 0.5).epsilon(1e-6));
}

TEST_CASE("constructors reject malformed models") {
  CHECK_THROWS_AS(LinearClassifier(Shape{1, 1, 2}, {{1.0, 2.0}}, {0.0}), InvalidInput);
  CHECK_THROWS_AS(LinearClassifier(Shape{1, 1, 2}, {{1.0}, {2.0}}, {0.0, 0.0}), InvalidInput);
  CHECK_THROWS_AS(LinearClassifier(Shape{1, 1, 1}, {{1.0}, {NAN}}, {0.0, 0.0}), InvalidInput);
  CHECK_THROWS_AS(PrototypeClassifier(Shape{1, 1, 1}, {{0.0}, {1.0}}, 0.0), InvalidInput);
}

TEST_CASE("batch inference checks shapes") {
  auto c = two_class_linear();
  CHECK_THROWS_AS(infer_batch(c, std::vector<InputTensor>{InputTensor::filled(Shape{1, 1, 4}, 0.f)}), InvalidInput);
  CHECK(infer_batch(c, std::vector<InputTensor>{}).empty());
}

TEST_CASE("analytic smoothed probability at margin sigma*|dw| is Phi(1)") {
  const auto c = two_class_linear();
  const double sigma = 0.5;
  // margin = (1, 2, 2) . x = sigma * 3 = 1.5 with x = (0.3, 0.3, 0.3)
  const InputTensor x(Shape{1, 1, 3}, {0.3f, 0.3f, 0.3f});
  CHECK(decision_margin(c, x) == doctest::Approx(1.5).epsilon(1e-6));
  CHECK(weight_gap_norm(c) == doctest::Approx(3.0));
  const double p = analytic_smoothed_probability(c, x, sigma);
  CHECK(p == doctest::Approx(static_cast<double>(oracle::phi(1.0L))).epsilon(1e-6));
  CHECK(p == doctest::Approx(0.8413447).epsilon(1e-6));
  CHECK(analytic_smoothed_probability(c, x, sigma, 1) == doctest::Approx(1 - p).epsilon(1e-12));

  LinearClassifier flat(Shape{1, 1, 1}, {{1.0}, {1.0}}, {0.0, 0.0});
  CHECK_THROWS_AS(analytic_smoothed_probability(flat, InputTensor::filled(Shape{1, 1, 1}, 0.f), 0.25),
                  DegenerateClassifier);
}

TEST_CASE("Monte Carlo smoothing agrees with the analytic probability") {
  const auto c = two_class_linear();
  const InputTensor x(Shape{1, 1, 3}, {0.3f, 0.3f, 0.3f});
  const NoiseSpec spec{0.5, 314};
  const std::size_t draws = 1000000;
  std::vector<InputTensor> batch;
  std::size_t wins = 0;
  for (std::size_t j = 0; j < draws; ++j) {
    batch.push_back(add_noise(x, spec, {0, 0, j}, NoiseMode::independent));
    if (batch.size() == 10000 || j + 1 == draws) {
      for (const auto& l : infer_batch(c, batch)) wins += l[0] > l[1];
      batch.clear();
    }
  }
  const double p = analytic_smoothed_probability(c, x, 0.5);
  const double est = static_cast<double>(wins) / draws;
  CHECK(std::abs(est - p) <= 3 * std::sqrt(p * (1 - p) / draws));
}

TEST_CASE("video classifier averages chunk logits and runs the inner model once per chunk") {
  const Shape chunk{16, 2, 2};  // m = 16 frames of one channel
  std::vector<std::vector<double>> protos{std::vector<double>(64, 0.0), std::vector<double>(64, 1.0)};
  auto inner = std::make_shared<CountingBackend>(std::make_shared<PrototypeClassifier>(chunk, protos, 1.0));
  ChunkAveragingVideoClassifier video(inner, 16);
  CHECK(video.frame_channels() == 1);

  std::vector<InputTensor> frames;
  for (int f = 0; f < 64; ++f) frames.push_back(InputTensor::filled(Shape{1, 2, 2}, f < 16 ? 0.0f : 1.0f));
  const auto logits = video.infer_video(VideoTensor(frames));
  CHECK(inner->seen() == 4);

  // chunk 0 sits on prototype 0, chunks 1-3 on prototype 1: mean of per-chunk logits
  CHECK(logits[0] == doctest::Approx((0.0 + 3 * -64.0) / 4));
  CHECK(logits[1] == doctest::Approx((-64.0 + 0.0) / 4));

  frames.pop_back();
  CHECK_THROWS_AS(video.infer_video(VideoTensor(frames)), SpecError);
  CHECK_THROWS_AS(ChunkAveragingVideoClassifier(inner, 3), SpecError);
}

TEST_CASE("describe fingerprints the parameters") {
  LinearClassifier a(Shape{1, 1, 1}, {{1.0}, {2.0}}, {0.0, 0.0});
  LinearClassifier b(Shape{1, 1, 1}, {{1.0}, {2.5}}, {0.0, 0.0});
  CHECK(a.describe() == LinearClassifier(Shape{1, 1, 1}, {{1.0}, {2.0}}, {0.0, 0.0}).describe());
  CHECK(a.describe() != b.describe());
}

TEST_CASE("backend spec JSON round trip") {
  const auto c = two_class_linear();
  const auto loaded = backend_from_json(linear_spec_json(c));
  const InputTensor x(Shape{1, 1, 3}, {0.1f, 0.2f, 0.7f});
  const auto a = infer_batch(c, std::vector<InputTensor>{x}).front();
  const auto b = infer_batch(*loaded, std::vector<InputTensor>{x}).front();
  CHECK(a[0] == b[0]);
  CHECK(a[1] == b[1]);
  CHECK(loaded->describe() == c.describe());

  const auto video = backend_from_json(
      R"({"kind":"prototype","input_shape":[4,1,1],"prototypes":[[0,0,0,0],[1,1,1,1]],"temperature":2,"video":{"chunk_frames":4}})");
  CHECK(video->accepts(Shape{8, 1, 1}));
  CHECK_THROWS_AS(backend_from_json(R"({"kind":"tree"})"), LoadError);
  CHECK_THROWS_AS(backend_from_json("{"), LoadError);
  CHECK_THROWS_AS(backend_from_json(R"({"kind":"linear","input_shape":[1,1,2],"weights":[[1,2]]})"), LoadError);
}
