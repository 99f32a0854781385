#include "smoothcert/classifiers.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>

#include "smoothcert/error.hpp"
#include "smoothcert/stats.hpp"

namespace smoothcert {

namespace {

void require_finite(const std::vector<double>& v, const char* what) {
  for (double x : v) {
    if (!std::isfinite(x)) throw InvalidInput(std::string(what) + " must be finite");
  }
}

// FNV-1a over the bit patterns of the parameters.
std::string fingerprint(const std::vector<std::vector<double>>& rows, const std::vector<double>& extra) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  auto mix = [&h](double v) {
    std::uint64_t bits;
    static_assert(sizeof bits == sizeof v);
    std::memcpy(&bits, &v, sizeof bits);
    for (int i = 0; i < 8; ++i) {
      h ^= (bits >> (8 * i)) & 0xffu;
      h *= 0x100000001b3ull;
    }
  };
  for (const auto& r : rows)
    for (double v : r) mix(v);
  for (double v : extra) mix(v);
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace

std::vector<LogitVector> infer_batch(const ClassifierBackend& backend, std::span<const InputTensor> inputs) {
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    if (!backend.accepts(inputs[i].shape())) {
      throw InvalidInput("input " + std::to_string(i) + " has shape " + inputs[i].shape().str() +
                         ", backend expects " + backend.input_shape().str());
    }
  }
  if (inputs.empty()) return {};
  auto out = backend.infer(inputs);
  if (out.size() != inputs.size()) throw InvalidInput("backend returned a different number of logit vectors");
  for (const auto& l : out) {
    if (l.classes() != backend.n_classes()) throw InvalidInput("backend returned wrong number of classes");
  }
  return out;
}

LinearClassifier::LinearClassifier(Shape shape, std::vector<std::vector<double>> weights, std::vector<double> biases)
    : shape_(shape), weights_(std::move(weights)), biases_(std::move(biases)) {
  if (shape_.elements() == 0) throw InvalidInput("linear classifier needs a non-empty input shape");
  if (weights_.size() < 2) throw InvalidInput("linear classifier needs at least 2 classes");
  if (biases_.size() != weights_.size()) throw InvalidInput("one bias per class required");
  for (const auto& w : weights_) {
    if (w.size() != shape_.elements()) throw InvalidInput("weight tensor does not match input shape");
    require_finite(w, "weights");
  }
  require_finite(biases_, "biases");
}

std::string LinearClassifier::describe() const {
  return "linear" + shape_.str() + "x" + std::to_string(weights_.size()) + ":" + fingerprint(weights_, biases_);
}

std::vector<LogitVector> LinearClassifier::infer(std::span<const InputTensor> inputs) const {
  std::vector<LogitVector> out;
  out.reserve(inputs.size());
  for (const auto& x : inputs) {
    auto xs = x.data();
    std::vector<double> logits(weights_.size());
    for (std::size_t c = 0; c < weights_.size(); ++c) {
      double acc = biases_[c];
      for (std::size_t e = 0; e < xs.size(); ++e) acc += weights_[c][e] * static_cast<double>(xs[e]);
      logits[c] = acc;
    }
    out.emplace_back(std::move(logits));
  }
  return out;
}

PrototypeClassifier::PrototypeClassifier(Shape shape, std::vector<std::vector<double>> prototypes,
                                         double temperature)
    : shape_(shape), prototypes_(std::move(prototypes)), temperature_(temperature) {
  if (shape_.elements() == 0) throw InvalidInput("prototype classifier needs a non-empty input shape");
  if (prototypes_.size() < 2) throw InvalidInput("prototype classifier needs at least 2 classes");
  if (!(temperature_ > 0.0) || !std::isfinite(temperature_)) throw InvalidInput("temperature must be positive");
  for (const auto& p : prototypes_) {
    if (p.size() != shape_.elements()) throw InvalidInput("prototype does not match input shape");
    require_finite(p, "prototypes");
  }
}

std::string PrototypeClassifier::describe() const {
  return "prototype" + shape_.str() + "x" + std::to_string(prototypes_.size()) + ":" +
         fingerprint(prototypes_, {temperature_});
}

std::vector<LogitVector> PrototypeClassifier::infer(std::span<const InputTensor> inputs) const {
  std::vector<LogitVector> out;
  out.reserve(inputs.size());
  for (const auto& x : inputs) {
    auto xs = x.data();
    std::vector<double> logits(prototypes_.size());
    for (std::size_t c = 0; c < prototypes_.size(); ++c) {
      double d2 = 0.0;
      for (std::size_t e = 0; e < xs.size(); ++e) {
        const double d = static_cast<double>(xs[e]) - prototypes_[c][e];
        d2 += d * d;
      }
      logits[c] = -d2 / temperature_;
    }
    out.emplace_back(std::move(logits));
  }
  return out;
}

ChunkAveragingVideoClassifier::ChunkAveragingVideoClassifier(std::shared_ptr<const ClassifierBackend> inner,
                                                             std::size_t chunk_frames)
    : inner_(std::move(inner)), chunk_frames_(chunk_frames), frame_channels_(0) {
  if (!inner_) throw InvalidInput("video classifier needs an inner backend");
  if (chunk_frames_ == 0) throw SpecError("chunk_frames must be positive");
  const Shape s = inner_->input_shape();
  if (s.channels % chunk_frames_ != 0) {
    throw SpecError("inner backend channels " + std::to_string(s.channels) + " not divisible by chunk_frames " +
                    std::to_string(chunk_frames_));
  }
  frame_channels_ = s.channels / chunk_frames_;
}

bool ChunkAveragingVideoClassifier::accepts(const Shape& shape) const {
  const Shape chunk = inner_->input_shape();
  return shape.height == chunk.height && shape.width == chunk.width && shape.channels > 0 &&
         shape.channels % chunk.channels == 0;
}

std::string ChunkAveragingVideoClassifier::describe() const {
  return "chunk-average(m=" + std::to_string(chunk_frames_) + "):" + inner_->describe();
}

LogitVector ChunkAveragingVideoClassifier::infer_video(const VideoTensor& v) const {
  if (v.frame_count() % chunk_frames_ != 0) {
    throw SpecError("video of " + std::to_string(v.frame_count()) + " frames is not divisible into chunks of " +
                    std::to_string(chunk_frames_));
  }
  if (v.frame_shape().channels != frame_channels_) throw InvalidInput("video frame channels do not match backend");
  const InputTensor flat = v.flatten();
  return infer_batch(*this, std::span<const InputTensor>(&flat, 1)).front();
}

std::vector<LogitVector> ChunkAveragingVideoClassifier::infer(std::span<const InputTensor> inputs) const {
  const Shape chunk = inner_->input_shape();
  const std::size_t per_chunk = chunk.elements();
  std::vector<InputTensor> chunks;
  std::vector<std::size_t> chunk_counts;
  chunk_counts.reserve(inputs.size());
  for (const auto& x : inputs) {
    auto data = x.data();
    const std::size_t n = data.size() / per_chunk;
    chunk_counts.push_back(n);
    for (std::size_t i = 0; i < n; ++i) {
      chunks.emplace_back(chunk, std::vector<float>(data.begin() + static_cast<std::ptrdiff_t>(i * per_chunk),
                                                    data.begin() + static_cast<std::ptrdiff_t>((i + 1) * per_chunk)));
    }
  }
  const auto chunk_logits = infer_batch(*inner_, chunks);
  std::vector<LogitVector> out;
  out.reserve(inputs.size());
  std::size_t at = 0;
  for (std::size_t n : chunk_counts) {
    std::vector<double> mean(n_classes(), 0.0);
    for (std::size_t i = 0; i < n; ++i, ++at) {
      for (std::size_t c = 0; c < mean.size(); ++c) mean[c] += chunk_logits[at][c];
    }
    for (double& m : mean) m /= static_cast<double>(n);
    out.emplace_back(std::move(mean));
  }
  return out;
}

double decision_margin(const LinearClassifier& c, const InputTensor& x) {
  if (c.n_classes() != 2) throw InvalidInput("analytic oracle needs exactly 2 classes");
  if (x.shape() != c.input_shape()) throw InvalidInput("input shape mismatch");
  auto xs = x.data();
  const auto& wa = c.weights(0);
  const auto& wb = c.weights(1);
  double m = c.bias(0) - c.bias(1);
  for (std::size_t e = 0; e < xs.size(); ++e) m += (wa[e] - wb[e]) * static_cast<double>(xs[e]);
  return m;
}

double weight_gap_norm(const LinearClassifier& c) {
  if (c.n_classes() != 2) throw InvalidInput("analytic oracle needs exactly 2 classes");
  const auto& wa = c.weights(0);
  const auto& wb = c.weights(1);
  double s = 0.0;
  for (std::size_t e = 0; e < wa.size(); ++e) s += (wa[e] - wb[e]) * (wa[e] - wb[e]);
  return std::sqrt(s);
}

double analytic_smoothed_probability(const LinearClassifier& c, const InputTensor& x, double sigma,
                                     std::size_t cls) {
  if (!(sigma > 0.0)) throw InvalidInput("sigma must be positive");
  if (cls > 1) throw InvalidInput("binary oracle class must be 0 or 1");
  const double norm = weight_gap_norm(c);
  if (norm == 0.0) throw DegenerateClassifier("weight difference is zero; smoothed prediction is constant");
  const double z = decision_margin(c, x) / (sigma * norm);
  return stats::normal_cdf(cls == 0 ? z : -z);
}

}  // namespace smoothcert
