#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace smoothcert {

/// Channel-major image shape (C x H x W).
struct Shape {
  std::size_t channels = 0;
  std::size_t height = 0;
  std::size_t width = 0;

  std::size_t elements() const noexcept { return channels * height * width; }
  bool operator==(const Shape&) const = default;
  std::string str() const;
};

/// C x H x W image with row-major float storage. Values are nominally in
/// [0,1] but noisy copies are not clamped.
class InputTensor {
 public:
  InputTensor() = default;
  InputTensor(Shape shape, std::vector<float> data);

  static InputTensor filled(Shape shape, float value);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t size() const noexcept { return data_.size(); }
  std::span<const float> data() const noexcept { return data_; }
  float at(std::size_t c, std::size_t y, std::size_t x) const {
    return data_[(c * shape_.height + y) * shape_.width + x];
  }

  bool operator==(const InputTensor&) const = default;

 private:
  Shape shape_{};
  std::vector<float> data_;
};

/// T frames of identical shape.
class VideoTensor {
 public:
  explicit VideoTensor(std::vector<InputTensor> frames);

  /// Reinterprets a (T*c, h, w) tensor as T frames of (c, h, w).
  static VideoTensor from_flat(const InputTensor& flat, std::size_t frame_channels);

  std::size_t frame_count() const noexcept { return frames_.size(); }
  const Shape& frame_shape() const noexcept { return frames_.front().shape(); }
  const InputTensor& frame(std::size_t t) const { return frames_.at(t); }
  const std::vector<InputTensor>& frames() const noexcept { return frames_; }

  /// Frames stacked along the channel axis: (T*c, h, w). This is also the
  /// transport layout for video chunks.
  InputTensor flatten() const;

 private:
  std::vector<InputTensor> frames_;
};

/// Raw per-class scores from a base classifier. At least two classes, all finite.
class LogitVector {
 public:
  explicit LogitVector(std::vector<double> values);

  std::size_t classes() const noexcept { return values_.size(); }
  std::span<const double> values() const noexcept { return values_; }
  double operator[](std::size_t i) const { return values_[i]; }

 private:
  std::vector<double> values_;
};

/// Per-class probabilities; entries in [0,1] summing to 1 within 1e-6.
class ClassDistribution {
 public:
  explicit ClassDistribution(std::vector<double> probs);

  std::size_t classes() const noexcept { return probs_.size(); }
  std::span<const double> probs() const noexcept { return probs_; }
  double operator[](std::size_t i) const { return probs_[i]; }

 private:
  std::vector<double> probs_;
};

/// Per-class vote counts with a cached total.
class ClassCounts {
 public:
  ClassCounts() = default;
  explicit ClassCounts(std::size_t classes) : counts_(classes, 0) {}
  explicit ClassCounts(std::vector<std::uint64_t> counts);

  std::size_t classes() const noexcept { return counts_.size(); }
  std::uint64_t total() const noexcept { return total_; }
  std::uint64_t operator[](std::size_t i) const { return counts_[i]; }
  std::span<const std::uint64_t> counts() const noexcept { return counts_; }

  void increment(std::size_t cls);
  ClassCounts& operator+=(const ClassCounts& other);
  bool operator==(const ClassCounts&) const = default;

  /// Index of the largest count, lowest index on ties.
  std::size_t top() const;
  /// Largest count among classes other than `excluded` (lowest index on ties).
  std::size_t runner_up(std::size_t excluded) const;

 private:
  std::vector<std::uint64_t> counts_;
  std::uint64_t total_ = 0;
};

ClassDistribution softmax(const LogitVector& logits);

/// Index of the maximal entry; ties resolve to the lowest index.
std::size_t argmax_class(std::span<const double> values);
inline std::size_t argmax_class(const ClassDistribution& dist) { return argmax_class(dist.probs()); }

}  // namespace smoothcert
