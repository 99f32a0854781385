// smoothcert: certify, predict, report and probe model servers from the shell.

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "smoothcert/metrics.hpp"
#include "smoothcert/net.hpp"
#include "smoothcert/run.hpp"
#include "smoothcert/stats.hpp"

using namespace smoothcert;

namespace {

struct Flags {
  std::string dataset;
  std::string format = "manifest";
  std::string backend_spec;
  std::string remote;
  std::string out = "smoothcert-out";
  std::size_t workers = 1;
  std::size_t max_inputs = 0;

  double sigma = 0.25;
  std::uint64_t n0 = 100;
  std::uint64_t n = 100000;
  double alpha = 0.001;
  std::string aggregation = "none";
  std::string noise_mode = "independent";
  std::string radius_mode = "one_sided";
  bool mean_logits = false;
  std::uint64_t seed = 0;
  std::size_t batch = 400;
  std::size_t threads = 1;
  bool retain_traces = false;

  std::size_t patches = 25;
  std::size_t resize_to = 36;
  std::size_t patch_side = 32;
  std::string sampling = "dense";
  std::size_t stride = 1;
  bool include_center = false;
  std::size_t classifier_side = 0;
  std::uint64_t patch_seed = 0;

  std::size_t subvideo_frames = 0;
  std::size_t chunk_frames = 0;
  std::size_t subvideo_count = 0;
  std::size_t subvideo_stride = 0;

  std::size_t max_batch = 256;
  int timeout_s = 60;
};

void add_run_options(CLI::App* cmd, Flags& f) {
  // repeated options keep the last value, which lets flags override the config file
  cmd->option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  cmd->add_option("--config", "Key-value config file mirroring the flags (flags win)");
  cmd->add_option("--dataset", f.dataset, "Dataset manifest or directory")->required();
  cmd->add_option("--format", f.format, "manifest | npy | png")->capture_default_str();
  cmd->add_option("--backend-spec", f.backend_spec, "JSON description of a builtin model");
  cmd->add_option("--remote", f.remote, "host:port of a model server");
  cmd->add_option("--out", f.out, "Output directory")->capture_default_str();
  cmd->add_option("--workers", f.workers, "Inputs certified concurrently")->capture_default_str();
  cmd->add_option("--max-inputs", f.max_inputs, "Stop after this many inputs (0: all)");

  cmd->add_option("--sigma", f.sigma, "Noise standard deviation")->capture_default_str();
  cmd->add_option("--n0", f.n0, "Selection draws")->capture_default_str();
  cmd->add_option("--n", f.n, "Estimation draws")->capture_default_str();
  cmd->add_option("--alpha", f.alpha, "Failure probability")->capture_default_str();
  cmd->add_option("--aggregation", f.aggregation, "none | max | mean")->capture_default_str();
  cmd->add_option("--noise-mode", f.noise_mode, "independent | shared")->capture_default_str();
  cmd->add_option("--radius-mode", f.radius_mode, "one_sided | two_sided")->capture_default_str();
  cmd->add_flag("--mean-logits", f.mean_logits, "Smooth-Mean averages raw logits");
  cmd->add_option("--seed", f.seed, "Noise seed (SMOOTHCERT_SEED overrides)")->capture_default_str();
  cmd->add_option("--batch", f.batch, "Noise draws per backend call")->capture_default_str();
  cmd->add_option("--threads", f.threads, "Sampling threads per input")->capture_default_str();
  cmd->add_flag("--retain-traces", f.retain_traces, "Keep per-draw scores for histograms");

  cmd->add_option("--patches", f.patches, "Patches per image (k)")->capture_default_str();
  cmd->add_option("--resize-to", f.resize_to, "Resize side before patching")->capture_default_str();
  cmd->add_option("--patch-side", f.patch_side, "Patch side")->capture_default_str();
  cmd->add_option("--sampling", f.sampling, "random | dense")->capture_default_str();
  cmd->add_option("--stride", f.stride, "Dense grid stride")->capture_default_str();
  cmd->add_flag("--include-center", f.include_center, "Append the center crop");
  cmd->add_option("--classifier-side", f.classifier_side, "Resize patches for the classifier (0: keep)");
  cmd->add_option("--patch-seed", f.patch_seed, "Seed for random patch origins");

  cmd->add_option("--subvideo-frames", f.subvideo_frames, "Frames per sub-video (t)");
  cmd->add_option("--chunk-frames", f.chunk_frames, "Frames per chunk (m)");
  cmd->add_option("--subvideo-count", f.subvideo_count, "Sub-videos per clip (0: all)");
  cmd->add_option("--subvideo-stride", f.subvideo_stride, "Frames between sub-video starts (0: t/2)");

  cmd->add_option("--max-batch", f.max_batch, "Largest request sent to a model server")->capture_default_str();
  cmd->add_option("--timeout", f.timeout_s, "Model server timeout in seconds")->capture_default_str();
}

RunConfig build_run_config(const Flags& f) {
  RunConfig rc;
  rc.dataset = f.dataset;
  rc.format = parse_dataset_format(f.format);
  if (!f.backend_spec.empty()) rc.backend_spec = f.backend_spec;
  if (!f.remote.empty()) rc.remote = f.remote;
  rc.remote_options.max_batch = f.max_batch;
  rc.remote_options.timeout = std::chrono::seconds(f.timeout_s);
  rc.out_dir = f.out;
  rc.workers = f.workers;
  rc.max_inputs = f.max_inputs;

  auto& c = rc.certify;
  c.sigma = f.sigma;
  c.n0 = f.n0;
  c.n = f.n;
  c.alpha = f.alpha;
  c.aggregation = parse_aggregation(f.aggregation);
  c.noise_mode = parse_noise_mode(f.noise_mode);
  c.radius_mode = parse_radius_mode(f.radius_mode);
  c.mean_over_logits = f.mean_logits;
  c.seed = f.seed;
  if (const char* env = std::getenv("SMOOTHCERT_SEED"); env && *env) {
    try {
      c.seed = std::stoull(env);
    } catch (const std::exception&) {
      throw SpecError(std::string("SMOOTHCERT_SEED is not an unsigned integer: ") + env);
    }
  }
  c.batch_size = f.batch;
  c.threads = f.threads;
  c.retain_traces = f.retain_traces;

  if (c.aggregation != Aggregation::none) {
    if (f.subvideo_frames > 0 || f.chunk_frames > 0) {
      SubVideoSpec s;
      if (f.subvideo_frames > 0) s.subvideo_frames = f.subvideo_frames;
      if (f.chunk_frames > 0) s.chunk_frames = f.chunk_frames;
      s.subvideo_count = f.subvideo_count;
      s.stride_frames = f.subvideo_stride;
      c.subvideo = s;
    } else {
      PatchSpec p;
      p.count = f.patches;
      p.resize_to = f.resize_to;
      p.patch_side = f.patch_side;
      p.mode = parse_sampling_mode(f.sampling);
      p.stride = f.stride;
      p.include_center = f.include_center;
      p.classifier_side = f.classifier_side;
      p.seed = f.patch_seed;
      c.patch = p;
    }
  }
  rc.validate();
  return rc;
}

int do_certify(const Flags& f) {
  const auto rc = build_run_config(f);
  const auto result = run_certification(rc);
  std::cout << "config " << result.config_hash << ": " << result.certified << " certified, " << result.resumed
            << " resumed, " << result.errors.size() << " failed\n";
  std::cout << "ACR " << result.summary.acr << ", abstention rate " << result.summary.abstention_rate << "\n";
  for (const auto& w : result.warnings) std::cerr << "warning: " << w << "\n";
  for (const auto& e : result.errors) std::cerr << "input " << e.input_id << ": " << e.message << "\n";
  std::cout << "reports written to " << rc.out_dir.string() << "\n";
  return result.exit_code();
}

int do_predict(const Flags& f) {
  const auto rc = build_run_config(f);
  const auto backend = make_backend(rc);
  const auto result = run_prediction(rc, *backend);
  std::cout << result.total << " predicted, " << result.correct << " correct, " << result.abstained
            << " abstained\n";
  for (const auto& e : result.errors) std::cerr << "input " << e.input_id << ": " << e.message << "\n";
  return result.errors.empty() ? 0 : 2;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\"");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\"");
  return s.substr(b, e - b + 1);
}

// Turns `key = value` lines into `--key value` arguments; booleans become bare flags.
std::vector<std::string> config_arguments(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw LoadError("cannot read config file " + path);
  std::vector<std::string> out;
  std::string line;
  while (std::getline(in, line)) {
    line = trim(line);
    if (line.empty() || line[0] == '#' || line[0] == ';' || line[0] == '[') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw LoadError("config line without '=': " + line);
    std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    std::replace(key.begin(), key.end(), '_', '-');
    if (value == "true" || value == "false") {
      if (value == "true") out.push_back("--" + key);
      continue;
    }
    out.push_back("--" + key);
    out.push_back(value);
  }
  return out;
}

// Config file arguments go first, right after the subcommand, so explicit flags win.
std::vector<std::string> expand_config(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  for (std::size_t i = 1; i < args.size(); ++i) {
    std::string path;
    std::size_t width = 1;
    if (args[i] == "--config" && i + 1 < args.size()) {
      path = args[i + 1];
      width = 2;
    } else if (args[i].rfind("--config=", 0) == 0) {
      path = args[i].substr(9);
    } else {
      continue;
    }
    args.erase(args.begin() + static_cast<std::ptrdiff_t>(i), args.begin() + static_cast<std::ptrdiff_t>(i + width));
    const auto extra = config_arguments(path);
    args.insert(args.begin() + 1, extra.begin(), extra.end());
    break;
  }
  return args;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Randomized-smoothing certification with patch ensembles"};
  app.require_subcommand(1);

  Flags certify_flags;
  Flags predict_flags;
  auto* certify_cmd = app.add_subcommand("certify", "Certify every input of a dataset");
  add_run_options(certify_cmd, certify_flags);
  auto* predict_cmd = app.add_subcommand("predict", "Smoothed prediction with abstention");
  add_run_options(predict_cmd, predict_flags);

  std::string report_dir;
  double report_step = 0.25;
  auto* report_cmd = app.add_subcommand("report", "Rebuild reports from records.json");
  report_cmd->add_option("--out", report_dir, "Output directory of an earlier run")->required();
  report_cmd->add_option("--step", report_step, "Radius grid step")->capture_default_str();

  std::string endpoint;
  int probe_timeout = 5;
  auto* check_cmd = app.add_subcommand("serve-check", "Handshake with a model server");
  check_cmd->add_option("--remote", endpoint, "host:port")->required();
  check_cmd->add_option("--timeout", probe_timeout, "Seconds")->capture_default_str();

  try {
    auto args = expand_config(argc, argv);
    std::reverse(args.begin(), args.end());
    try {
      app.parse(args);
    } catch (const CLI::ParseError& e) {
      return app.exit(e);
    }

    if (*certify_cmd) return do_certify(certify_flags);
    if (*predict_cmd) return do_predict(predict_flags);
    if (*report_cmd) {
      const auto s = regenerate_report(report_dir, report_step);
      std::cout << s.records << " records, ACR " << s.acr << ", abstention rate " << s.abstention_rate << "\n";
      return 0;
    }
    if (*check_cmd) {
      const auto [host, port] = net::parse_endpoint(endpoint);
      const auto hello = serve_check(host, port, std::chrono::seconds(probe_timeout));
      std::cout << "protocol v" << hello.version << ", " << hello.n_classes << " classes, input "
                << hello.input_shape.str() << "\n";
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
