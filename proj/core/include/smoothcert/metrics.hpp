#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "smoothcert/certify.hpp"

namespace smoothcert {

/// Fixed-width (0.02) histograms of the top-1 and top-2 reduced scores over [0,1].
struct ScoreHistogram {
  static constexpr std::size_t kBins = 50;
  static constexpr double kBinWidth = 1.0 / kBins;

  std::vector<std::uint64_t> top1 = std::vector<std::uint64_t>(kBins, 0);
  std::vector<std::uint64_t> top2 = std::vector<std::uint64_t>(kBins, 0);

  static std::size_t bin_of(double v);
  void add(const SampleTrace& trace);
  ScoreHistogram& operator+=(const ScoreHistogram& other);
  bool empty() const;
  /// Mean of the binned values using bin centers.
  double top1_mean() const;
};

struct ExperimentRecord {
  std::uint64_t input_id = 0;
  std::size_t true_label = 0;
  CertificationOutcome outcome;
  std::optional<ScoreHistogram> histogram;

  bool correct() const noexcept { return !outcome.abstained() && outcome.predicted_class == true_label; }
};

struct CurvePoint {
  double radius = 0.0;
  double certified_accuracy = 0.0;
};

struct MetricsSummary {
  std::size_t records = 0;
  double acr = 0.0;
  double abstention_rate = 0.0;
  std::vector<CurvePoint> certified_accuracy_curve;
  std::optional<ScoreHistogram> histogram;
};

/// Mean of R_i over records predicted correctly, 0 for everything else.
double compute_acr(std::span<const ExperimentRecord> records);
double certified_accuracy_at(std::span<const ExperimentRecord> records, double r);
double abstention_rate(std::span<const ExperimentRecord> records);

/// Radii 0, step, 2*step, ... up to the first grid point past the largest
/// certified radius.
std::vector<CurvePoint> certified_accuracy_curve(std::span<const ExperimentRecord> records, double step = 0.25);

/// Histogram over retained sample traces.
ScoreHistogram logit_histogram(std::span<const SampleTrace> traces);
/// Merged histogram of every record; Unavailable when none retained traces.
ScoreHistogram logit_histogram(std::span<const ExperimentRecord> records);

/// Empty record sets summarize to zeros.
MetricsSummary summarize(std::span<const ExperimentRecord> records, double step = 0.25);

/// Thread-safe append-only record store.
class RecordCollector {
 public:
  void append(ExperimentRecord record);
  /// Records sorted by input_id.
  std::vector<ExperimentRecord> snapshot() const;
  std::size_t size() const;

 private:
  mutable std::mutex mu_;
  std::vector<ExperimentRecord> records_;
};

/// Canonical text of every certification-relevant setting (the basis of the config hash).
std::string canonical_config(const CertifyConfig& config);
std::string config_hash(const std::string& canonical_text);

struct InputError {
  std::uint64_t input_id = 0;
  std::string message;
};

std::string record_to_json(const ExperimentRecord& record);
ExperimentRecord record_from_json(const std::string& text);

void write_records_json(const std::filesystem::path& path, std::span<const ExperimentRecord> records);
std::vector<ExperimentRecord> read_records_json(const std::filesystem::path& path);
/// Numeric summary only (no timings), so reruns produce identical bytes.
void write_summary_json(const std::filesystem::path& path, const MetricsSummary& summary, const std::string& hash,
                        std::span<const InputError> errors, std::optional<double> ensemble_failure_bound);
void write_curve_csv(const std::filesystem::path& path, std::span<const CurvePoint> curve);
void write_histogram_csv(const std::filesystem::path& path, std::span<const std::uint64_t> bins);

}  // namespace smoothcert
