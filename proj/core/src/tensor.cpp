#include "smoothcert/tensor.hpp"

#include <algorithm>
#include <cmath>

#include "smoothcert/error.hpp"

namespace smoothcert {

std::string Shape::str() const {
  return "(" + std::to_string(channels) + "," + std::to_string(height) + "," + std::to_string(width) + ")";
}

InputTensor::InputTensor(Shape shape, std::vector<float> data) : shape_(shape), data_(std::move(data)) {
  if (shape_.channels == 0 || shape_.height == 0 || shape_.width == 0) {
    throw InvalidInput("tensor shape must be non-empty, got " + shape_.str());
  }
  if (data_.size() != shape_.elements()) {
    throw InvalidInput("tensor data length " + std::to_string(data_.size()) + " does not match shape " +
                       shape_.str());
  }
}

InputTensor InputTensor::filled(Shape shape, float value) {
  return InputTensor(shape, std::vector<float>(shape.elements(), value));
}

VideoTensor::VideoTensor(std::vector<InputTensor> frames) : frames_(std::move(frames)) {
  if (frames_.empty()) throw InvalidInput("video needs at least one frame");
  const Shape& s = frames_.front().shape();
  for (std::size_t t = 1; t < frames_.size(); ++t) {
    if (frames_[t].shape() != s) {
      throw InvalidInput("video frame " + std::to_string(t) + " has shape " + frames_[t].shape().str() +
                         ", expected " + s.str());
    }
  }
}

VideoTensor VideoTensor::from_flat(const InputTensor& flat, std::size_t frame_channels) {
  const Shape& s = flat.shape();
  if (frame_channels == 0 || s.channels % frame_channels != 0) {
    throw InvalidInput("cannot split " + s.str() + " into frames of " + std::to_string(frame_channels) +
                       " channels");
  }
  const Shape fs{frame_channels, s.height, s.width};
  const std::size_t per = fs.elements();
  std::vector<InputTensor> frames;
  frames.reserve(s.channels / frame_channels);
  auto data = flat.data();
  for (std::size_t off = 0; off < data.size(); off += per) {
    frames.emplace_back(fs, std::vector<float>(data.begin() + off, data.begin() + off + per));
  }
  return VideoTensor(std::move(frames));
}

InputTensor VideoTensor::flatten() const {
  const Shape& fs = frame_shape();
  std::vector<float> out;
  out.reserve(fs.elements() * frames_.size());
  for (const auto& f : frames_) out.insert(out.end(), f.data().begin(), f.data().end());
  return InputTensor(Shape{fs.channels * frames_.size(), fs.height, fs.width}, std::move(out));
}

LogitVector::LogitVector(std::vector<double> values) : values_(std::move(values)) {
  if (values_.size() < 2) throw InvalidInput("logit vector needs at least 2 classes");
  for (std::size_t i = 0; i < values_.size(); ++i) {
    if (!std::isfinite(values_[i])) throw InvalidInput("non-finite logit at class " + std::to_string(i));
  }
}

ClassDistribution::ClassDistribution(std::vector<double> probs) : probs_(std::move(probs)) {
  if (probs_.empty()) throw InvalidInput("empty class distribution");
  double sum = 0.0;
  for (double p : probs_) {
    if (!(p >= 0.0 && p <= 1.0)) throw InvalidInput("probability outside [0,1]");
    sum += p;
  }
  if (std::abs(sum - 1.0) > 1e-6) throw InvalidInput("probabilities sum to " + std::to_string(sum));
}

ClassCounts::ClassCounts(std::vector<std::uint64_t> counts) : counts_(std::move(counts)) {
  for (auto c : counts_) total_ += c;
}

void ClassCounts::increment(std::size_t cls) {
  ++counts_.at(cls);
  ++total_;
}

ClassCounts& ClassCounts::operator+=(const ClassCounts& other) {
  if (counts_.empty()) counts_.assign(other.classes(), 0);
  if (other.classes() != classes()) throw InvalidInput("class count mismatch when merging counts");
  for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += other.counts_[i];
  total_ += other.total_;
  return *this;
}

std::size_t ClassCounts::top() const {
  if (counts_.empty()) throw InvalidInput("empty counts");
  return static_cast<std::size_t>(std::max_element(counts_.begin(), counts_.end()) - counts_.begin());
}

std::size_t ClassCounts::runner_up(std::size_t excluded) const {
  if (counts_.size() < 2) throw InvalidInput("runner-up needs at least 2 classes");
  std::size_t best = excluded == 0 ? 1 : 0;
  for (std::size_t i = 0; i < counts_.size(); ++i) {
    if (i != excluded && counts_[i] > counts_[best]) best = i;
  }
  return best;
}

ClassDistribution softmax(const LogitVector& logits) {
  auto v = logits.values();
  const double m = *std::max_element(v.begin(), v.end());
  std::vector<double> out(v.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    out[i] = std::exp(v[i] - m);
    sum += out[i];
  }
  for (double& p : out) p /= sum;
  return ClassDistribution(std::move(out));
}

std::size_t argmax_class(std::span<const double> values) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[best]) best = i;
  }
  return best;
}

}  // namespace smoothcert
