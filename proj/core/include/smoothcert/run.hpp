#pragma once

#include <cstddef>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "smoothcert/certify.hpp"
#include "smoothcert/classifiers.hpp"
#include "smoothcert/dataset.hpp"
#include "smoothcert/metrics.hpp"
#include "smoothcert/remote.hpp"

namespace smoothcert {

struct RunConfig {
  std::filesystem::path dataset;
  DatasetFormat format = DatasetFormat::manifest;
  std::optional<std::filesystem::path> backend_spec;  // builtin model description
  std::optional<std::string> remote;                  // host:port of a model server
  RemoteClassifier::Options remote_options{};
  CertifyConfig certify;
  std::filesystem::path out_dir = "smoothcert-out";
  std::size_t workers = 1;
  std::size_t max_inputs = 0;  // 0 = all

  void validate() const;
};

struct RunResult {
  std::string config_hash;
  std::size_t certified = 0;  // computed by this invocation
  std::size_t resumed = 0;    // taken from an earlier invocation
  std::vector<InputError> errors;
  std::vector<std::string> warnings;
  MetricsSummary summary;

  /// 0 on success (including an empty dataset), 2 when any input failed.
  int exit_code() const noexcept { return errors.empty() ? 0 : 2; }
};

/// Builds the configured backend. A remote backend is contacted immediately so
/// an unreachable server fails before any sampling.
std::shared_ptr<const ClassifierBackend> make_backend(const RunConfig& config);

/// Hash of every certification-relevant setting plus backend and dataset identity.
std::string run_config_hash(const RunConfig& config, const ClassifierBackend& backend);

/// Certifies every dataset item and persists records.json, summary.json,
/// curve.csv and (when traces are retained) hist_top1.csv / hist_top2.csv.
/// Inputs already journaled in out_dir are skipped; a directory written under
/// a different config hash is refused with SpecError.
RunResult run_certification(const RunConfig& config, const ClassifierBackend& backend);
RunResult run_certification(const RunConfig& config);

struct PredictionResult {
  std::size_t total = 0;
  std::size_t abstained = 0;
  std::size_t correct = 0;
  std::vector<InputError> errors;
};

/// Smoothed prediction for every item; writes predictions.csv to out_dir.
PredictionResult run_prediction(const RunConfig& config, const ClassifierBackend& backend);

/// Rebuilds summary.json, curve.csv and histogram CSVs from records.json.
MetricsSummary regenerate_report(const std::filesystem::path& out_dir, double step = 0.25);

}  // namespace smoothcert
