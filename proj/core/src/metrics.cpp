#include "smoothcert/metrics.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace smoothcert {

namespace {

using nlohmann::ordered_json;

void require_records(std::span<const ExperimentRecord> records) {
  if (records.empty()) throw InvalidInput("metrics need at least one record");
}

// Shortest text that round-trips.
std::string fmt_double(double v) {
  char buf[40];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

ordered_json patch_to_json(const PatchSpec& p) {
  return ordered_json{{"resize_to", p.resize_to},
                      {"patch_side", p.patch_side},
                      {"count", p.count},
                      {"sampling", to_string(p.mode)},
                      {"stride", p.stride},
                      {"include_center", p.include_center},
                      {"seed", p.seed},
                      {"classifier_side", p.classifier_side}};
}

PatchSpec patch_from_json(const ordered_json& j) {
  PatchSpec p;
  p.resize_to = j.at("resize_to").get<std::size_t>();
  p.patch_side = j.at("patch_side").get<std::size_t>();
  p.count = j.at("count").get<std::size_t>();
  p.mode = parse_sampling_mode(j.at("sampling").get<std::string>());
  p.stride = j.at("stride").get<std::size_t>();
  p.include_center = j.at("include_center").get<bool>();
  p.seed = j.at("seed").get<std::uint64_t>();
  p.classifier_side = j.value("classifier_side", std::size_t{0});
  return p;
}

ordered_json subvideo_to_json(const SubVideoSpec& s) {
  return ordered_json{{"subvideo_frames", s.subvideo_frames},
                      {"chunk_frames", s.chunk_frames},
                      {"subvideo_count", s.subvideo_count},
                      {"stride_frames", s.stride_frames}};
}

SubVideoSpec subvideo_from_json(const ordered_json& j) {
  SubVideoSpec s;
  s.subvideo_frames = j.at("subvideo_frames").get<std::size_t>();
  s.chunk_frames = j.at("chunk_frames").get<std::size_t>();
  s.subvideo_count = j.at("subvideo_count").get<std::size_t>();
  s.stride_frames = j.at("stride_frames").get<std::size_t>();
  return s;
}

ordered_json config_to_json(const CertifyConfig& c) {
  ordered_json j;
  j["sigma"] = c.sigma;
  j["n0"] = c.n0;
  j["n"] = c.n;
  j["alpha"] = c.alpha;
  j["aggregation"] = to_string(c.aggregation);
  j["noise_mode"] = to_string(c.noise_mode);
  j["radius_mode"] = to_string(c.radius_mode);
  j["mean_over_logits"] = c.mean_over_logits;
  j["patch"] = c.patch ? patch_to_json(*c.patch) : ordered_json(nullptr);
  j["subvideo"] = c.subvideo ? subvideo_to_json(*c.subvideo) : ordered_json(nullptr);
  j["seed"] = c.seed;
  j["batch_size"] = c.batch_size;
  j["threads"] = c.threads;
  j["retain_traces"] = c.retain_traces;
  return j;
}

CertifyConfig config_from_json(const ordered_json& j) {
  CertifyConfig c;
  c.sigma = j.at("sigma").get<double>();
  c.n0 = j.at("n0").get<std::uint64_t>();
  c.n = j.at("n").get<std::uint64_t>();
  c.alpha = j.at("alpha").get<double>();
  c.aggregation = parse_aggregation(j.at("aggregation").get<std::string>());
  c.noise_mode = parse_noise_mode(j.at("noise_mode").get<std::string>());
  c.radius_mode = parse_radius_mode(j.at("radius_mode").get<std::string>());
  c.mean_over_logits = j.value("mean_over_logits", false);
  if (!j.at("patch").is_null()) c.patch = patch_from_json(j.at("patch"));
  if (!j.at("subvideo").is_null()) c.subvideo = subvideo_from_json(j.at("subvideo"));
  c.seed = j.at("seed").get<std::uint64_t>();
  c.batch_size = j.value("batch_size", std::size_t{400});
  c.threads = j.value("threads", std::size_t{1});
  c.retain_traces = j.value("retain_traces", false);
  return c;
}

ordered_json record_json(const ExperimentRecord& r) {
  const auto& o = r.outcome;
  ordered_json j;
  j["input_id"] = r.input_id;
  j["true_label"] = r.true_label;
  j["predicted"] = o.abstained() ? ordered_json(-1) : ordered_json(o.predicted_class);
  j["abstained"] = o.abstained();
  j["correct"] = r.correct();
  j["radius"] = o.radius;
  j["p_a_lower"] = o.p_a_lower;
  j["p_b_upper"] = o.p_b_upper ? ordered_json(*o.p_b_upper) : ordered_json(nullptr);
  j["runner_up"] = o.runner_up == kAbstain ? ordered_json(nullptr) : ordered_json(o.runner_up);
  j["counts0"] = std::vector<std::uint64_t>(o.counts0.counts().begin(), o.counts0.counts().end());
  j["counts"] = std::vector<std::uint64_t>(o.counts.counts().begin(), o.counts.counts().end());
  j["ensemble_size"] = o.ensemble_size;
  j["wall_time_s"] = o.wall_time_s;
  j["config"] = config_to_json(o.config);
  if (r.histogram) {
    j["hist_top1"] = r.histogram->top1;
    j["hist_top2"] = r.histogram->top2;
  }
  return j;
}

ExperimentRecord record_from(const ordered_json& j) {
  ExperimentRecord r;
  r.input_id = j.at("input_id").get<std::uint64_t>();
  r.true_label = j.at("true_label").get<std::size_t>();
  auto& o = r.outcome;
  const auto predicted = j.at("predicted").get<long long>();
  o.predicted_class = predicted < 0 ? kAbstain : static_cast<std::size_t>(predicted);
  o.radius = j.at("radius").get<double>();
  o.p_a_lower = j.at("p_a_lower").get<double>();
  if (!j.at("p_b_upper").is_null()) o.p_b_upper = j.at("p_b_upper").get<double>();
  if (j.contains("runner_up") && !j.at("runner_up").is_null()) o.runner_up = j.at("runner_up").get<std::size_t>();
  o.counts0 = ClassCounts(j.at("counts0").get<std::vector<std::uint64_t>>());
  o.counts = ClassCounts(j.at("counts").get<std::vector<std::uint64_t>>());
  o.ensemble_size = j.value("ensemble_size", std::size_t{0});
  o.wall_time_s = j.value("wall_time_s", 0.0);
  o.config = config_from_json(j.at("config"));
  if (j.contains("hist_top1")) {
    ScoreHistogram h;
    h.top1 = j.at("hist_top1").get<std::vector<std::uint64_t>>();
    h.top2 = j.at("hist_top2").get<std::vector<std::uint64_t>>();
    if (h.top1.size() != ScoreHistogram::kBins || h.top2.size() != ScoreHistogram::kBins) {
      throw LoadError("record histogram has the wrong number of bins");
    }
    r.histogram = std::move(h);
  }
  return r;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + tmp.string());
    out << text;
    if (!out) throw Error("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace

std::size_t ScoreHistogram::bin_of(double v) {
  if (!(v > 0.0)) return 0;
  return std::min(kBins - 1, static_cast<std::size_t>(std::floor(v * static_cast<double>(kBins))));
}

void ScoreHistogram::add(const SampleTrace& trace) {
  for (double v : trace.top1) ++top1[bin_of(v)];
  for (double v : trace.top2) ++top2[bin_of(v)];
}

ScoreHistogram& ScoreHistogram::operator+=(const ScoreHistogram& other) {
  for (std::size_t b = 0; b < kBins; ++b) {
    top1[b] += other.top1[b];
    top2[b] += other.top2[b];
  }
  return *this;
}

bool ScoreHistogram::empty() const {
  return std::all_of(top1.begin(), top1.end(), [](auto c) { return c == 0; });
}

double ScoreHistogram::top1_mean() const {
  double sum = 0.0;
  std::uint64_t total = 0;
  for (std::size_t b = 0; b < kBins; ++b) {
    sum += static_cast<double>(top1[b]) * (static_cast<double>(b) + 0.5) * kBinWidth;
    total += top1[b];
  }
  return total == 0 ? 0.0 : sum / static_cast<double>(total);
}

double compute_acr(std::span<const ExperimentRecord> records) {
  require_records(records);
  double sum = 0.0;
  for (const auto& r : records) {
    if (r.correct()) sum += r.outcome.radius;
  }
  return sum / static_cast<double>(records.size());
}

double certified_accuracy_at(std::span<const ExperimentRecord> records, double r) {
  if (r < 0.0) throw InvalidInput("radius must be non-negative");
  if (records.empty()) return 0.0;
  std::size_t hits = 0;
  for (const auto& rec : records) {
    if (rec.correct() && rec.outcome.radius >= r) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(records.size());
}

double abstention_rate(std::span<const ExperimentRecord> records) {
  require_records(records);
  const auto n = std::count_if(records.begin(), records.end(), [](const auto& r) { return r.outcome.abstained(); });
  return static_cast<double>(n) / static_cast<double>(records.size());
}

std::vector<CurvePoint> certified_accuracy_curve(std::span<const ExperimentRecord> records, double step) {
  if (!(step > 0.0)) throw InvalidInput("curve step must be positive");
  double max_radius = 0.0;
  for (const auto& r : records) max_radius = std::max(max_radius, r.outcome.radius);
  const auto last = static_cast<std::size_t>(std::floor(max_radius / step)) + 1;
  std::vector<CurvePoint> curve;
  curve.reserve(last + 1);
  for (std::size_t i = 0; i <= last; ++i) {
    const double r = static_cast<double>(i) * step;
    curve.push_back({r, certified_accuracy_at(records, r)});
  }
  return curve;
}

ScoreHistogram logit_histogram(std::span<const SampleTrace> traces) {
  ScoreHistogram h;
  for (const auto& t : traces) h.add(t);
  return h;
}

ScoreHistogram logit_histogram(std::span<const ExperimentRecord> records) {
  ScoreHistogram h;
  bool any = false;
  for (const auto& r : records) {
    if (r.histogram) {
      h += *r.histogram;
      any = true;
    } else if (r.outcome.trace) {
      h.add(*r.outcome.trace);
      any = true;
    }
  }
  if (!any) throw Unavailable("no record retained sample traces; rerun with trace retention enabled");
  return h;
}

MetricsSummary summarize(std::span<const ExperimentRecord> records, double step) {
  MetricsSummary s;
  s.records = records.size();
  s.certified_accuracy_curve = certified_accuracy_curve(records, step);
  if (!records.empty()) {
    s.acr = compute_acr(records);
    s.abstention_rate = abstention_rate(records);
    try {
      s.histogram = logit_histogram(records);
    } catch (const Unavailable&) {
    }
  }
  return s;
}

void RecordCollector::append(ExperimentRecord record) {
  std::lock_guard lock(mu_);
  records_.push_back(std::move(record));
}

std::vector<ExperimentRecord> RecordCollector::snapshot() const {
  std::lock_guard lock(mu_);
  auto out = records_;
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.input_id < b.input_id; });
  return out;
}

std::size_t RecordCollector::size() const {
  std::lock_guard lock(mu_);
  return records_.size();
}

std::string canonical_config(const CertifyConfig& c) {
  std::ostringstream os;
  os << "sigma=" << fmt_double(c.sigma) << "\n"
     << "n0=" << c.n0 << "\n"
     << "n=" << c.n << "\n"
     << "alpha=" << fmt_double(c.alpha) << "\n"
     << "aggregation=" << to_string(c.aggregation) << "\n"
     << "noise_mode=" << to_string(c.noise_mode) << "\n"
     << "radius_mode=" << to_string(c.radius_mode) << "\n"
     << "mean_over_logits=" << c.mean_over_logits << "\n"
     << "seed=" << c.seed << "\n"
     << "retain_traces=" << c.retain_traces << "\n";
  if (c.patch) {
    const auto& p = *c.patch;
    os << "patch=" << p.resize_to << "," << p.patch_side << "," << p.count << "," << to_string(p.mode) << ","
       << p.stride << "," << p.include_center << "," << p.seed << "," << p.classifier_side << "\n";
  }
  if (c.subvideo) {
    const auto& s = *c.subvideo;
    os << "subvideo=" << s.subvideo_frames << "," << s.chunk_frames << "," << s.subvideo_count << ","
       << s.effective_stride() << "\n";
  }
  return os.str();
}

std::string config_hash(const std::string& canonical_text) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char ch : canonical_text) {
    h ^= ch;
    h *= 0x100000001b3ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string record_to_json(const ExperimentRecord& record) { return record_json(record).dump(); }

ExperimentRecord record_from_json(const std::string& text) {
  try {
    return record_from(ordered_json::parse(text));
  } catch (const nlohmann::json::exception& e) {
    throw LoadError(std::string("malformed record: ") + e.what());
  } catch (const SpecError& e) {
    throw LoadError(std::string("malformed record: ") + e.what());
  }
}

void write_records_json(const std::filesystem::path& path, std::span<const ExperimentRecord> records) {
  ordered_json arr = ordered_json::array();
  for (const auto& r : records) arr.push_back(record_json(r));
  write_text(path, arr.dump(2) + "\n");
}

std::vector<ExperimentRecord> read_records_json(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError("cannot open " + path.string());
  std::vector<ExperimentRecord> out;
  try {
    const auto arr = ordered_json::parse(in);
    if (!arr.is_array()) throw LoadError(path.string() + " is not a JSON array");
    for (const auto& j : arr) out.push_back(record_from(j));
  } catch (const nlohmann::json::exception& e) {
    throw LoadError("malformed " + path.string() + ": " + e.what());
  }
  return out;
}

void write_summary_json(const std::filesystem::path& path, const MetricsSummary& summary, const std::string& hash,
                        std::span<const InputError> errors, std::optional<double> ensemble_failure_bound) {
  ordered_json j;
  j["config_hash"] = hash;
  j["records"] = summary.records;
  j["acr"] = summary.acr;
  j["abstention_rate"] = summary.abstention_rate;
  ordered_json curve = ordered_json::array();
  for (const auto& p : summary.certified_accuracy_curve) {
    curve.push_back({{"radius", p.radius}, {"certified_accuracy", p.certified_accuracy}});
  }
  j["certified_accuracy"] = curve;
  j["ensemble_failure_bound"] = ensemble_failure_bound ? ordered_json(*ensemble_failure_bound) : ordered_json(nullptr);
  ordered_json errs = ordered_json::array();
  for (const auto& e : errors) errs.push_back({{"input_id", e.input_id}, {"message", e.message}});
  j["errors"] = errs;
  ordered_json warnings = ordered_json::array();
  if (summary.records == 0) warnings.push_back("no records were certified");
  j["warnings"] = warnings;
  write_text(path, j.dump(2) + "\n");
}

void write_curve_csv(const std::filesystem::path& path, std::span<const CurvePoint> curve) {
  std::ostringstream os;
  os << "radius,certified_accuracy\n";
  for (const auto& p : curve) os << fmt_double(p.radius) << "," << fmt_double(p.certified_accuracy) << "\n";
  write_text(path, os.str());
}

void write_histogram_csv(const std::filesystem::path& path, std::span<const std::uint64_t> bins) {
  std::ostringstream os;
  os << "bin_start,bin_end,count\n";
  for (std::size_t b = 0; b < bins.size(); ++b) {
    os << fmt_double(static_cast<double>(b) * ScoreHistogram::kBinWidth) << ","
       << fmt_double(static_cast<double>(b + 1) * ScoreHistogram::kBinWidth) << "," << bins[b] << "\n";
  }
  write_text(path, os.str());
}

}  // namespace smoothcert
