#include "smoothcert/certify.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <mutex>
#include <thread>

#include "smoothcert/stats.hpp"

namespace smoothcert {

namespace {

NoiseSpec noise_spec(const CertifyConfig& config) { return NoiseSpec{config.sigma, config.seed}; }

void top_two(std::span<const double> v, double& first, double& second) {
  first = -std::numeric_limits<double>::infinity();
  second = -std::numeric_limits<double>::infinity();
  for (double x : v) {
    if (x > first) {
      second = first;
      first = x;
    } else if (x > second) {
      second = x;
    }
  }
}

std::vector<InputTensor> perturb(std::span<const InputTensor> members, const CertifyConfig& config,
                                 std::uint64_t input_id, std::uint64_t first, std::uint64_t last) {
  std::vector<InputTensor> out;
  out.reserve(static_cast<std::size_t>(last - first) * members.size());
  const NoiseSpec spec = noise_spec(config);
  for (std::uint64_t j = first; j < last; ++j) {
    for (std::size_t i = 0; i < members.size(); ++i) {
      out.push_back(add_noise(members[i], spec, SampleKey{input_id, i, j}, config.noise_mode));
    }
  }
  return out;
}

}  // namespace

void CertifyConfig::validate() const {
  if (!(sigma > 0.0) || !std::isfinite(sigma)) throw SpecError("sigma must be positive");
  if (n0 == 0 || n == 0) throw SpecError("n0 and n must be at least 1");
  if (!(alpha > 0.0 && alpha < 1.0)) throw SpecError("alpha must lie in (0,1)");
  if (batch_size == 0) throw SpecError("batch_size must be at least 1");
  if (n0 + n > std::numeric_limits<std::uint32_t>::max()) throw SpecError("n0 + n exceeds the noise index space");
  if (patch) patch->validate();
  if (subvideo) subvideo->validate();
}

std::vector<double> reduce_scores(std::span<const LogitVector> patch_logits, Aggregation aggregation,
                                  bool mean_over_logits) {
  if (patch_logits.empty()) throw InvalidInput("nothing to reduce");
  const std::size_t classes = patch_logits.front().classes();

  if (aggregation == Aggregation::none) {
    if (patch_logits.size() != 1) throw SpecError("standard smoothing expects a single ensemble member");
    const auto dist = softmax(patch_logits.front());
    return {dist.probs().begin(), dist.probs().end()};
  }

  if (aggregation == Aggregation::mean && mean_over_logits) {
    std::vector<double> acc(classes, 0.0);
    for (const auto& l : patch_logits) {
      for (std::size_t c = 0; c < classes; ++c) acc[c] += l[c];
    }
    for (double& v : acc) v /= static_cast<double>(patch_logits.size());
    const auto dist = softmax(LogitVector(std::move(acc)));
    return {dist.probs().begin(), dist.probs().end()};
  }

  std::vector<double> out;
  for (const auto& l : patch_logits) {
    const auto dist = softmax(l);
    auto p = dist.probs();
    if (out.empty()) {
      out.assign(p.begin(), p.end());
      continue;
    }
    for (std::size_t c = 0; c < classes; ++c) {
      out[c] = aggregation == Aggregation::max ? std::max(out[c], p[c]) : out[c] + p[c];
    }
  }
  if (aggregation == Aggregation::mean) {
    for (double& v : out) v /= static_cast<double>(patch_logits.size());
  }
  return out;
}

std::vector<ClassDistribution> noisy_member_distributions(const ClassifierBackend& backend,
                                                          std::span<const InputTensor> members,
                                                          const CertifyConfig& config, std::uint64_t input_id,
                                                          std::uint64_t noise_index) {
  const auto noisy = perturb(members, config, input_id, noise_index, noise_index + 1);
  const auto logits = infer_batch(backend, noisy);
  std::vector<ClassDistribution> out;
  out.reserve(logits.size());
  for (const auto& l : logits) out.push_back(softmax(l));
  return out;
}

ClassCounts smooth_reduce_under_noise(const ClassifierBackend& backend, std::span<const InputTensor> members,
                                      std::uint64_t n, const CertifyConfig& config, NoiseStream stream,
                                      SampleTrace* trace) {
  config.validate();
  if (members.empty()) throw InvalidInput("empty ensemble");
  if (config.aggregation == Aggregation::none && members.size() != 1) {
    throw SpecError("standard smoothing expects a single ensemble member");
  }
  const std::size_t classes = backend.n_classes();
  const std::size_t k = members.size();
  const std::uint64_t batch = config.batch_size;
  const std::uint64_t batches = (n + batch - 1) / batch;

  if (trace) {
    trace->top1.assign(n, 0.0);
    trace->top2.assign(n, 0.0);
  }

  ClassCounts total(classes);
  std::mutex mu;
  std::exception_ptr failure;
  std::atomic<bool> failed{false};
  std::atomic<std::uint64_t> next{0};

  auto work = [&] {
    for (;;) {
      const std::uint64_t b = next.fetch_add(1);
      if (b >= batches || failed.load()) return;
      const std::uint64_t first = b * batch;
      const std::uint64_t last = std::min(n, first + batch);
      try {
        const auto noisy = perturb(members, config, stream.input_id, stream.first_noise_index + first,
                                   stream.first_noise_index + last);
        const auto logits = infer_batch(backend, noisy);
        ClassCounts local(classes);
        for (std::uint64_t j = first; j < last; ++j) {
          const auto reduced = reduce_scores(std::span<const LogitVector>(logits).subspan((j - first) * k, k),
                                             config.aggregation, config.mean_over_logits);
          local.increment(argmax_class(reduced));
          if (trace) top_two(reduced, trace->top1[j], trace->top2[j]);
        }
        std::lock_guard lock(mu);
        total += local;
      } catch (...) {
        std::lock_guard lock(mu);
        if (!failure) failure = std::current_exception();
        failed.store(true);
        return;
      }
    }
  };

  const std::size_t threads = static_cast<std::size_t>(std::min<std::uint64_t>(std::max<std::size_t>(1, config.threads), batches));
  if (threads <= 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(threads);
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }

  if (failure) {
    try {
      std::rethrow_exception(failure);
    } catch (const TransportError& e) {
      throw SamplingAborted("sampling aborted after " + std::to_string(total.total()) + " of " + std::to_string(n) +
                                " draws: " + e.what(),
                            total);
    }
  }
  return total;
}

std::vector<InputTensor> build_ensemble(const InputTensor& x, const CertifyConfig& config, std::uint64_t input_id) {
  if (config.aggregation == Aggregation::none) return {x};
  if (!config.patch) throw SpecError("patch aggregation requires a patch spec");
  return sample_patches(x, *config.patch, input_id).patches;
}

std::vector<InputTensor> build_ensemble(const VideoTensor& v, const CertifyConfig& config) {
  if (config.aggregation == Aggregation::none) return {v.flatten()};
  if (!config.subvideo) throw SpecError("sub-video aggregation requires a sub-video spec");
  std::vector<InputTensor> out;
  for (const auto& sv : sample_subvideos(v, *config.subvideo)) out.push_back(sv.video.flatten());
  return out;
}

double certified_radius(double sigma, double p_a_lower, std::optional<double> p_b_upper) {
  if (!(p_a_lower > 0.5)) return 0.0;
  if (!p_b_upper) return sigma * stats::normal_quantile(p_a_lower);
  const double r = 0.5 * sigma * (stats::normal_quantile(p_a_lower) - stats::normal_quantile(*p_b_upper));
  return r > 0.0 ? r : 0.0;
}

CertificationOutcome certify_ensemble(const ClassifierBackend& backend, std::span<const InputTensor> members,
                                      const CertifyConfig& config, std::uint64_t input_id) {
  config.validate();
  const auto start = std::chrono::steady_clock::now();

  CertificationOutcome out;
  out.config = config;
  out.ensemble_size = members.size();
  out.counts0 = smooth_reduce_under_noise(backend, members, config.n0, config, NoiseStream{input_id, 0});
  const std::size_t selected = out.counts0.top();

  SampleTrace trace;
  out.counts = smooth_reduce_under_noise(backend, members, config.n, config, NoiseStream{input_id, config.n0},
                                         config.retain_traces ? &trace : nullptr);
  if (config.retain_traces) out.trace = std::move(trace);

  out.p_a_lower = stats::lower_conf_bound({config.alpha, config.n, out.counts[selected]});
  if (config.radius_mode == RadiusMode::two_sided) {
    out.runner_up = out.counts.runner_up(selected);
    out.p_b_upper = stats::upper_conf_bound({config.alpha, config.n, out.counts[out.runner_up]});
  }
  out.radius = certified_radius(config.sigma, out.p_a_lower, out.p_b_upper);
  out.predicted_class = out.radius > 0.0 ? selected : kAbstain;

  out.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return out;
}

CertificationOutcome certify(const ClassifierBackend& backend, const InputTensor& x, const CertifyConfig& config,
                             std::uint64_t input_id) {
  config.validate();
  const auto members = build_ensemble(x, config, input_id);
  return certify_ensemble(backend, members, config, input_id);
}

CertificationOutcome certify(const ClassifierBackend& backend, const VideoTensor& v, const CertifyConfig& config,
                             std::uint64_t input_id) {
  config.validate();
  const auto members = build_ensemble(v, config);
  return certify_ensemble(backend, members, config, input_id);
}

std::size_t predict_from_counts(const ClassCounts& counts, double alpha) {
  const std::size_t top = counts.top();
  const std::size_t second = counts.runner_up(top);
  const std::uint64_t na = counts[top];
  const std::uint64_t nb = counts[second];
  return stats::binomial_two_sided_p(na, na + nb) > alpha ? kAbstain : top;
}

std::size_t predict(const ClassifierBackend& backend, const InputTensor& x, const CertifyConfig& config,
                    std::uint64_t input_id) {
  config.validate();
  const auto members = build_ensemble(x, config, input_id);
  return predict_from_counts(smooth_reduce_under_noise(backend, members, config.n0, config, {input_id, 0}),
                             config.alpha);
}

std::size_t predict(const ClassifierBackend& backend, const VideoTensor& v, const CertifyConfig& config,
                    std::uint64_t input_id) {
  config.validate();
  const auto members = build_ensemble(v, config);
  return predict_from_counts(smooth_reduce_under_noise(backend, members, config.n0, config, {input_id, 0}),
                             config.alpha);
}

std::string to_string(Aggregation a) {
  switch (a) {
    case Aggregation::none: return "none";
    case Aggregation::max: return "max";
    case Aggregation::mean: return "mean";
  }
  return "?";
}

std::string to_string(NoiseMode m) { return m == NoiseMode::shared ? "shared" : "independent"; }
std::string to_string(RadiusMode m) { return m == RadiusMode::two_sided ? "two_sided" : "one_sided"; }
std::string to_string(SamplingMode m) { return m == SamplingMode::random ? "random" : "dense"; }

Aggregation parse_aggregation(const std::string& s) {
  if (s == "none" || s == "standard") return Aggregation::none;
  if (s == "max") return Aggregation::max;
  if (s == "mean") return Aggregation::mean;
  throw SpecError("unknown aggregation '" + s + "'");
}

NoiseMode parse_noise_mode(const std::string& s) {
  if (s == "independent") return NoiseMode::independent;
  if (s == "shared") return NoiseMode::shared;
  throw SpecError("unknown noise mode '" + s + "'");
}

RadiusMode parse_radius_mode(const std::string& s) {
  if (s == "one_sided" || s == "one-sided") return RadiusMode::one_sided;
  if (s == "two_sided" || s == "two-sided") return RadiusMode::two_sided;
  throw SpecError("unknown radius mode '" + s + "'");
}

SamplingMode parse_sampling_mode(const std::string& s) {
  if (s == "random") return SamplingMode::random;
  if (s == "dense") return SamplingMode::dense;
  throw SpecError("unknown sampling mode '" + s + "'");
}

}  // namespace smoothcert
