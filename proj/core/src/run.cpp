#include "smoothcert/run.hpp"

#include <algorithm>
#include <atomic>
#include <fstream>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include "json.hpp"
#include "smoothcert/backend_spec.hpp"
#include "smoothcert/net.hpp"
#include "smoothcert/stats.hpp"

namespace smoothcert {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

constexpr const char* kJournal = "records.jsonl";
constexpr const char* kRunFile = "run.json";

std::string run_canonical(const RunConfig& config, const ClassifierBackend& backend) {
  std::string text = canonical_config(config.certify);
  text += "backend=" + backend.describe() + "\n";
  text += "dataset=" + fs::absolute(config.dataset).lexically_normal().string() + "\n";
  text += "format=" + to_string(config.format) + "\n";
  return text;
}

std::vector<DatasetItem> load_items(const RunConfig& config, const ClassifierBackend& backend) {
  auto items = load_dataset(config.dataset, config.format, backend.n_classes());
  if (config.max_inputs > 0 && items.size() > config.max_inputs) items.resize(config.max_inputs);
  for (const auto& item : items) {
    if (item.is_video() && config.certify.patch) {
      throw SpecError("patch settings given for a video dataset (item " + std::to_string(item.id) + ")");
    }
    if (!item.is_video() && config.certify.subvideo) {
      throw SpecError("sub-video settings given for an image dataset (item " + std::to_string(item.id) + ")");
    }
  }
  return items;
}

/// Claims out_dir for this configuration or refuses if it belongs to another.
void claim_output_dir(const RunConfig& config, const std::string& hash, const std::string& canonical) {
  fs::create_directories(config.out_dir);
  const fs::path run_file = config.out_dir / kRunFile;
  if (fs::exists(run_file)) {
    std::ifstream in(run_file);
    std::string recorded;
    try {
      recorded = json::parse(in).at("config_hash").get<std::string>();
    } catch (const json::exception& e) {
      throw LoadError("malformed " + run_file.string() + ": " + e.what());
    }
    if (recorded != hash) {
      throw SpecError("output directory " + config.out_dir.string() + " holds results for config " + recorded +
                      ", refusing to mix in results for config " + hash);
    }
    return;
  }
  std::ofstream out(run_file, std::ios::trunc);
  out << json{{"config_hash", hash}, {"canonical_config", canonical}}.dump(2) << "\n";
  if (!out) throw Error("cannot write " + run_file.string());
}

std::map<std::uint64_t, ExperimentRecord> read_journal(const fs::path& path) {
  std::map<std::uint64_t, ExperimentRecord> out;
  std::ifstream in(path);
  if (!in) return out;
  std::vector<std::string> lines;
  for (std::string line; std::getline(in, line);) {
    if (!line.empty()) lines.push_back(line);
  }
  for (std::size_t i = 0; i < lines.size(); ++i) {
    try {
      auto record = record_from_json(lines[i]);
      out.insert_or_assign(record.input_id, std::move(record));
    } catch (const LoadError&) {
      // A torn final line is what an interrupted write leaves behind.
      if (i + 1 != lines.size()) throw;
    }
  }
  return out;
}

ExperimentRecord certify_item(const DatasetItem& item, const ClassifierBackend& backend, const CertifyConfig& config) {
  ExperimentRecord record;
  record.input_id = item.id;
  record.true_label = item.label;
  record.outcome = std::visit([&](const auto& x) { return certify(backend, x, config, item.id); }, item.input);
  if (record.outcome.trace) {
    ScoreHistogram h;
    h.add(*record.outcome.trace);
    record.histogram = std::move(h);
    record.outcome.trace.reset();
  }
  return record;
}

/// Runs fn(index) for every index on a bounded worker pool.
template <typename Fn>
void for_each_parallel(std::size_t count, std::size_t workers, Fn fn) {
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i = next.fetch_add(1); i < count; i = next.fetch_add(1)) fn(i);
  };
  const std::size_t n = std::min(std::max<std::size_t>(1, workers), count);
  if (n <= 1) {
    work();
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(n);
  for (std::size_t t = 0; t < n; ++t) pool.emplace_back(work);
  for (auto& t : pool) t.join();
}

std::optional<double> failure_bound(std::span<const ExperimentRecord> records, const CertifyConfig& config) {
  if (config.aggregation == Aggregation::none || records.empty()) return std::nullopt;
  return stats::ensemble_failure_bound(records.front().outcome.ensemble_size, config.alpha);
}

void write_reports(const fs::path& dir, std::span<const ExperimentRecord> records, const MetricsSummary& summary,
                   const std::string& hash, std::span<const InputError> errors, std::optional<double> bound) {
  write_records_json(dir / "records.json", records);
  write_summary_json(dir / "summary.json", summary, hash, errors, bound);
  write_curve_csv(dir / "curve.csv", summary.certified_accuracy_curve);
  if (summary.histogram) {
    write_histogram_csv(dir / "hist_top1.csv", summary.histogram->top1);
    write_histogram_csv(dir / "hist_top2.csv", summary.histogram->top2);
  }
}

}  // namespace

void RunConfig::validate() const {
  certify.validate();
  if (backend_spec.has_value() == remote.has_value()) {
    throw SpecError("exactly one of a backend spec file or a remote endpoint is required");
  }
  if (workers == 0) throw SpecError("workers must be at least 1");
  if (dataset.empty()) throw SpecError("a dataset path is required");
  if (certify.patch && certify.subvideo) throw SpecError("patch and sub-video settings are mutually exclusive");
}

std::shared_ptr<const ClassifierBackend> make_backend(const RunConfig& config) {
  if (config.backend_spec) return load_backend_spec(*config.backend_spec);
  if (!config.remote) throw SpecError("no backend configured");
  const auto [host, port] = net::parse_endpoint(*config.remote);
  return std::make_shared<RemoteClassifier>(host, port, config.remote_options);
}

std::string run_config_hash(const RunConfig& config, const ClassifierBackend& backend) {
  return config_hash(run_canonical(config, backend));
}

RunResult run_certification(const RunConfig& config, const ClassifierBackend& backend) {
  config.validate();
  const auto items = load_items(config, backend);

  RunResult result;
  const std::string canonical = run_canonical(config, backend);
  result.config_hash = config_hash(canonical);
  claim_output_dir(config, result.config_hash, canonical);

  const fs::path journal_path = config.out_dir / kJournal;
  auto done = read_journal(journal_path);

  std::vector<const DatasetItem*> todo;
  std::set<std::uint64_t> selected;
  for (const auto& item : items) {
    selected.insert(item.id);
    if (!done.count(item.id)) todo.push_back(&item);
  }

  RecordCollector collector;
  for (auto& [id, record] : done) {
    if (selected.count(id)) {
      collector.append(std::move(record));
      ++result.resumed;
    }
  }

  std::mutex writer;
  std::ofstream journal(journal_path, std::ios::app);
  if (!journal) throw Error("cannot append to " + journal_path.string());

  for_each_parallel(todo.size(), config.workers, [&](std::size_t i) {
    const DatasetItem& item = *todo[i];
    try {
      auto record = certify_item(item, backend, config.certify);
      const std::string line = record_to_json(record);
      {
        std::lock_guard lock(writer);
        journal << line << "\n";
        journal.flush();
        result.certified++;
      }
      collector.append(std::move(record));
    } catch (const Error& e) {
      std::lock_guard lock(writer);
      result.errors.push_back({item.id, e.what()});
    }
  });
  journal.close();

  std::sort(result.errors.begin(), result.errors.end(),
            [](const auto& a, const auto& b) { return a.input_id < b.input_id; });

  const auto records = collector.snapshot();
  if (records.empty()) result.warnings.push_back("no records were certified");
  result.summary = summarize(records);
  write_reports(config.out_dir, records, result.summary, result.config_hash, result.errors,
                failure_bound(records, config.certify));
  return result;
}

RunResult run_certification(const RunConfig& config) {
  config.validate();
  const auto backend = make_backend(config);
  return run_certification(config, *backend);
}

PredictionResult run_prediction(const RunConfig& config, const ClassifierBackend& backend) {
  config.validate();
  const auto items = load_items(config, backend);
  std::vector<std::size_t> predicted(items.size(), kAbstain);
  std::vector<std::string> failures(items.size());

  for_each_parallel(items.size(), config.workers, [&](std::size_t i) {
    try {
      predicted[i] = std::visit([&](const auto& x) { return predict(backend, x, config.certify, items[i].id); },
                                items[i].input);
    } catch (const Error& e) {
      failures[i] = e.what();
    }
  });

  fs::create_directories(config.out_dir);
  std::ofstream out(config.out_dir / "predictions.csv", std::ios::trunc);
  out << "input_id,label,predicted\n";
  PredictionResult result;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (!failures[i].empty()) {
      result.errors.push_back({items[i].id, failures[i]});
      continue;
    }
    ++result.total;
    out << items[i].id << "," << items[i].label << ",";
    if (predicted[i] == kAbstain) {
      ++result.abstained;
      out << "abstain\n";
    } else {
      if (predicted[i] == items[i].label) ++result.correct;
      out << predicted[i] << "\n";
    }
  }
  if (!out) throw Error("cannot write predictions.csv");
  return result;
}

MetricsSummary regenerate_report(const fs::path& out_dir, double step) {
  const auto records = read_records_json(out_dir / "records.json");
  std::string hash;
  std::vector<InputError> errors;
  std::optional<double> bound;
  {
    std::ifstream in(out_dir / kRunFile);
    if (!in) throw LoadError("no " + std::string(kRunFile) + " in " + out_dir.string());
    try {
      hash = json::parse(in).at("config_hash").get<std::string>();
    } catch (const json::exception& e) {
      throw LoadError(std::string("malformed run.json: ") + e.what());
    }
  }
  if (std::ifstream in(out_dir / "summary.json"); in) {
    try {
      const auto j = json::parse(in);
      for (const auto& e : j.at("errors")) {
        errors.push_back({e.at("input_id").get<std::uint64_t>(), e.at("message").get<std::string>()});
      }
      if (!j.at("ensemble_failure_bound").is_null()) bound = j.at("ensemble_failure_bound").get<double>();
    } catch (const json::exception&) {
      // a damaged summary is simply rebuilt without the error list
    }
  }
  const auto summary = summarize(records, step);
  write_reports(out_dir, records, summary, hash, errors, bound);
  return summary;
}

}  // namespace smoothcert
