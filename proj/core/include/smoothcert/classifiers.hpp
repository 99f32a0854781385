#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "smoothcert/tensor.hpp"

namespace smoothcert {

/// Base classifier f: input -> logits. Implementations must return exactly
/// n_classes() logits per input and be deterministic for a fixed input.
class ClassifierBackend {
 public:
  virtual ~ClassifierBackend() = default;

  virtual std::size_t n_classes() const = 0;
  /// Declared input shape. Video backends declare their chunk shape.
  virtual Shape input_shape() const = 0;
  virtual bool accepts(const Shape& shape) const { return shape == input_shape(); }
  /// Stable identity string; part of the run configuration hash.
  virtual std::string describe() const = 0;

 protected:
  friend std::vector<LogitVector> infer_batch(const ClassifierBackend&, std::span<const InputTensor>);
  /// Inputs are already shape-checked.
  virtual std::vector<LogitVector> infer(std::span<const InputTensor> inputs) const = 0;
};

/// Shape-checked, order-preserving batch inference.
std::vector<LogitVector> infer_batch(const ClassifierBackend& backend, std::span<const InputTensor> inputs);

/// logits_c = <w_c, x> + b_c
class LinearClassifier final : public ClassifierBackend {
 public:
  LinearClassifier(Shape shape, std::vector<std::vector<double>> weights, std::vector<double> biases);

  std::size_t n_classes() const override { return weights_.size(); }
  Shape input_shape() const override { return shape_; }
  std::string describe() const override;

  const std::vector<double>& weights(std::size_t cls) const { return weights_.at(cls); }
  double bias(std::size_t cls) const { return biases_.at(cls); }

 protected:
  std::vector<LogitVector> infer(std::span<const InputTensor> inputs) const override;

 private:
  Shape shape_;
  std::vector<std::vector<double>> weights_;
  std::vector<double> biases_;
};

/// logits_c = -||x - mu_c||^2 / temperature
class PrototypeClassifier final : public ClassifierBackend {
 public:
  PrototypeClassifier(Shape shape, std::vector<std::vector<double>> prototypes, double temperature);

  std::size_t n_classes() const override { return prototypes_.size(); }
  Shape input_shape() const override { return shape_; }
  std::string describe() const override;

 protected:
  std::vector<LogitVector> infer(std::span<const InputTensor> inputs) const override;

 private:
  Shape shape_;
  std::vector<std::vector<double>> prototypes_;
  double temperature_;
};

/// Video classifier that splits a (T*c, h, w) clip into T/m non-overlapping
/// chunks of m frames, runs `inner` on each (m*c, h, w) chunk and averages the
/// chunk logits.
class ChunkAveragingVideoClassifier final : public ClassifierBackend {
 public:
  ChunkAveragingVideoClassifier(std::shared_ptr<const ClassifierBackend> inner, std::size_t chunk_frames);

  std::size_t n_classes() const override { return inner_->n_classes(); }
  Shape input_shape() const override { return inner_->input_shape(); }
  bool accepts(const Shape& shape) const override;
  std::string describe() const override;

  std::size_t chunk_frames() const noexcept { return chunk_frames_; }
  std::size_t frame_channels() const noexcept { return frame_channels_; }

  LogitVector infer_video(const VideoTensor& v) const;

 protected:
  std::vector<LogitVector> infer(std::span<const InputTensor> inputs) const override;

 private:
  std::shared_ptr<const ClassifierBackend> inner_;
  std::size_t chunk_frames_;
  std::size_t frame_channels_;
};

/// (w_a - w_b) . x + (b_a - b_b) for a two-class linear model, A = class 0.
double decision_margin(const LinearClassifier& c, const InputTensor& x);
/// ||w_0 - w_1||_2
double weight_gap_norm(const LinearClassifier& c);

/// Exact probability that class `cls` wins under x + N(0, sigma^2 I) for a
/// two-class linear model: Phi(margin / (sigma ||dw||)) for class 0.
/// Throws DegenerateClassifier when the weight gap is zero.
double analytic_smoothed_probability(const LinearClassifier& c, const InputTensor& x, double sigma,
                                     std::size_t cls = 0);

}  // namespace smoothcert
