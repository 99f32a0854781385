#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "smoothcert/classifiers.hpp"
#include "smoothcert/error.hpp"
#include "smoothcert/noise.hpp"
#include "smoothcert/patching.hpp"
#include "smoothcert/tensor.hpp"

namespace smoothcert {

enum class Aggregation {
  none,  // standard randomized smoothing on the unpatched input
  max,   // Smooth-Max: elementwise max of per-patch softmax
  mean,  // Smooth-Mean: elementwise mean of per-patch softmax (or raw logits)
};

enum class RadiusMode {
  one_sided,  // sigma * Phi^-1(pA_lower)
  two_sided,  // sigma/2 * (Phi^-1(pA_lower) - Phi^-1(pB_upper))
};

struct CertifyConfig {
  double sigma = 0.25;
  std::uint64_t n0 = 100;
  std::uint64_t n = 100000;
  double alpha = 0.001;
  Aggregation aggregation = Aggregation::none;
  NoiseMode noise_mode = NoiseMode::independent;
  RadiusMode radius_mode = RadiusMode::one_sided;
  bool mean_over_logits = false;  // Smooth-Mean averages raw logits instead of probabilities

  std::optional<PatchSpec> patch;        // images, aggregation != none
  std::optional<SubVideoSpec> subvideo;  // videos, aggregation != none

  std::uint64_t seed = 0;
  std::size_t batch_size = 400;  // noise draws per backend dispatch
  std::size_t threads = 1;
  bool retain_traces = false;

  void validate() const;
};

inline constexpr std::size_t kAbstain = std::numeric_limits<std::size_t>::max();

/// Top-1 and top-2 entries of the reduced score vector, one per estimation draw.
struct SampleTrace {
  std::vector<double> top1;
  std::vector<double> top2;
};

struct CertificationOutcome {
  std::size_t predicted_class = kAbstain;
  double radius = 0.0;
  double p_a_lower = 0.0;
  std::optional<double> p_b_upper;  // two_sided mode only
  std::size_t runner_up = kAbstain;
  ClassCounts counts0;
  ClassCounts counts;
  std::size_t ensemble_size = 0;  // k (patches or sub-videos)
  CertifyConfig config;
  double wall_time_s = 0.0;
  std::optional<SampleTrace> trace;

  bool abstained() const noexcept { return predicted_class == kAbstain; }
};

/// Raised when the backend fails mid-sampling. Carries the counts accumulated
/// by batches that completed before the failure.
class SamplingAborted : public Error {
 public:
  SamplingAborted(const std::string& what, ClassCounts partial) : Error(what), partial_(std::move(partial)) {}
  const ClassCounts& partial_counts() const noexcept { return partial_; }

 private:
  ClassCounts partial_;
};

/// Where one Monte Carlo phase draws its noise from.
struct NoiseStream {
  std::uint64_t input_id = 0;
  std::uint64_t first_noise_index = 0;
};

/// Collapses per-patch logits into one score vector (softmax first unless
/// mean_over_logits is set for Smooth-Mean).
std::vector<double> reduce_scores(std::span<const LogitVector> patch_logits, Aggregation aggregation,
                                  bool mean_over_logits = false);

/// Softmax outputs of every ensemble member for a single noise draw.
std::vector<ClassDistribution> noisy_member_distributions(const ClassifierBackend& backend,
                                                          std::span<const InputTensor> members,
                                                          const CertifyConfig& config, std::uint64_t input_id,
                                                          std::uint64_t noise_index);

/// For j in [0, n): perturb every member, infer, reduce across members and
/// vote for the argmax. Result is independent of threads and batch_size.
ClassCounts smooth_reduce_under_noise(const ClassifierBackend& backend, std::span<const InputTensor> members,
                                      std::uint64_t n, const CertifyConfig& config, NoiseStream stream,
                                      SampleTrace* trace = nullptr);

/// The ensemble an input is certified over: {x} for standard smoothing,
/// the patch set otherwise.
std::vector<InputTensor> build_ensemble(const InputTensor& x, const CertifyConfig& config, std::uint64_t input_id);
/// Flattened sub-videos ({whole clip} for standard smoothing).
std::vector<InputTensor> build_ensemble(const VideoTensor& v, const CertifyConfig& config);

/// Selection with n0 draws, estimation with n fresh draws, Clopper-Pearson
/// lower bound on the selected class and abstention unless it exceeds 1/2.
CertificationOutcome certify_ensemble(const ClassifierBackend& backend, std::span<const InputTensor> members,
                                      const CertifyConfig& config, std::uint64_t input_id = 0);
CertificationOutcome certify(const ClassifierBackend& backend, const InputTensor& x, const CertifyConfig& config,
                             std::uint64_t input_id = 0);
CertificationOutcome certify(const ClassifierBackend& backend, const VideoTensor& v, const CertifyConfig& config,
                             std::uint64_t input_id = 0);

/// Abstains when the two-sided binomial test of the top two counts exceeds alpha.
std::size_t predict_from_counts(const ClassCounts& counts, double alpha);
std::size_t predict(const ClassifierBackend& backend, const InputTensor& x, const CertifyConfig& config,
                    std::uint64_t input_id = 0);
std::size_t predict(const ClassifierBackend& backend, const VideoTensor& v, const CertifyConfig& config,
                    std::uint64_t input_id = 0);

/// Certified radius for the given bounds; 0 when the bound does not certify.
double certified_radius(double sigma, double p_a_lower, std::optional<double> p_b_upper);

std::string to_string(Aggregation a);
std::string to_string(NoiseMode m);
std::string to_string(RadiusMode m);
std::string to_string(SamplingMode m);
Aggregation parse_aggregation(const std::string& s);
NoiseMode parse_noise_mode(const std::string& s);
RadiusMode parse_radius_mode(const std::string& s);
SamplingMode parse_sampling_mode(const std::string& s);

}  // namespace smoothcert
