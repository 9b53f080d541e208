#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "simplihumon/checkpoint.hpp"
#include "simplihumon/metrics.hpp"
#include "simplihumon/model.hpp"
#include "simplihumon/motion_data.hpp"
#include "simplihumon/training.hpp"
#include "simplihumon/verify.hpp"

namespace fs = std::filesystem;
using namespace simplihumon;
using nlohmann::ordered_json;

namespace {

constexpr const char* kToolVersion = "0.1.0";

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read \"" + path + "\"");
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

std::string fnv1a_digest(const std::string& bytes) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  char buf[32];
  std::snprintf(buf, sizeof buf, "fnv1a64:%016llx", static_cast<unsigned long long>(h));
  return buf;
}

void write_text(const std::string& path, const std::string& content) {
  if (fs::path(path).has_parent_path()) fs::create_directories(fs::path(path).parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write \"" + path + "\"");
  out << content;
}

struct Manifest {
  std::string command;
  ordered_json config = ordered_json::object();
  std::uint64_t seed = 0;
  std::vector<std::string> input_paths;
  std::vector<std::string> output_paths;
};

void write_manifest(const std::string& path, const Manifest& m) {
  ordered_json j;
  j["command"] = m.command;
  j["config"] = m.config;
  j["seed"] = m.seed;
  j["tool_version"] = kToolVersion;
  ordered_json inputs = ordered_json::object();
  for (const std::string& p : m.input_paths) inputs[p] = fnv1a_digest(read_file(p));
  j["inputs"] = std::move(inputs);
  j["outputs"] = m.output_paths;
  write_text(path, j.dump(2) + "\n");
}

nlohmann::json parse_json_file(const std::string& path) {
  try {
    return nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("\"" + path + "\" is not valid JSON: " + e.what());
  }
}

// ---- synth ----------------------------------------------------------------

struct SynthArgs {
  std::string scenario;
  std::size_t count = 0;
  std::size_t timesteps = 20;
  std::size_t m = 1;
  std::uint64_t seed = 0;
  std::string out;
  std::size_t turn_frame = SIZE_MAX;
};

int cmd_synth(const SynthArgs& a) {
  if (a.count == 0) throw ConfigError("count must be ≥ 1");
  const SynthScenario sc = scenario_from_string(a.scenario);
  std::optional<std::size_t> turn;
  if (a.turn_frame != SIZE_MAX) turn = a.turn_frame;
  const std::vector<MotionSequence> seqs =
      synth_generate(sc, a.count, a.timesteps, a.m, a.seed, turn);
  write_sequences(a.out, seqs);

  Manifest man;
  man.command = "synth";
  man.config = {{"scenario", a.scenario}, {"count", a.count},   {"timesteps", a.timesteps},
                {"m", a.m},               {"seed", a.seed},     {"out", a.out}};
  if (turn) man.config["turn_frame"] = *turn;
  man.seed = a.seed;
  man.output_paths = {a.out};
  write_manifest(a.out + ".manifest.json", man);

  std::cout << seqs.size() << " records -> " << a.out << "\n";
  return 0;
}

// ---- train ----------------------------------------------------------------

std::vector<std::vector<MotionSequence>> load_datasets(const TrainConfig& cfg) {
  std::vector<std::vector<MotionSequence>> data;
  for (const DatasetSpec& d : cfg.datasets) data.push_back(read_sequences(d.path));
  return data;
}

int cmd_train(const std::string& config_path, const std::string& out_dir) {
  const TrainConfig cfg = train_config_from_json(parse_json_file(config_path));
  const auto data = load_datasets(cfg);
  const TrainArtifacts art = train(cfg, data, out_dir);

  Manifest man;
  man.command = "train";
  man.config = train_config_to_json(cfg);
  man.seed = cfg.seed;
  man.input_paths.push_back(config_path);
  for (const DatasetSpec& d : cfg.datasets) man.input_paths.push_back(d.path);
  man.output_paths = {art.checkpoint_prefix + ".json", art.checkpoint_prefix + ".blob",
                      art.log_path};
  if (!art.best_checkpoint_prefix.empty()) {
    man.output_paths.push_back(art.best_checkpoint_prefix + ".json");
    man.output_paths.push_back(art.best_checkpoint_prefix + ".blob");
  }
  write_manifest((fs::path(out_dir) / "run_manifest.json").string(), man);

  const EpochLogEntry& last = art.log.back();
  std::cout << "trained " << cfg.epochs << " epochs, final mean loss " << last.mean_loss
            << ", checkpoint " << art.checkpoint_prefix << "\n";
  return 0;
}

// ---- eval -----------------------------------------------------------------

struct EvalArgs {
  std::string checkpoint;
  std::string data;
  std::string out;
  std::size_t k = 0;
  std::vector<std::size_t> timesteps;
};

int cmd_eval(const EvalArgs& a) {
  Checkpoint ckpt = load_checkpoint(a.checkpoint);
  const std::vector<MotionSequence> data = read_sequences(a.data);
  EvalOptions opt;
  opt.k = a.k;
  opt.timesteps = a.timesteps;
  const MetricReport report = evaluate(ckpt.params, ckpt.config, data, opt);
  write_text(a.out, report_to_json(report));

  Manifest man;
  man.command = "eval";
  man.config = {{"checkpoint", a.checkpoint},
                {"k", a.k},
                {"timesteps", a.timesteps},
                {"model", config_to_json(ckpt.config)}};
  man.input_paths = {a.checkpoint + ".json", a.checkpoint + ".blob", a.data};
  man.output_paths = {a.out};
  write_manifest(a.out + ".manifest.json", man);

  std::cout << report_summary_line(report) << "\n";
  return 0;
}

// ---- ablate ---------------------------------------------------------------

struct AblateArgs {
  std::string suite;
  std::string config;
  std::string data;
  std::string out;
  std::uint64_t seed = 0;
  bool seed_set = false;
};

int cmd_ablate(const AblateArgs& a) {
  TrainConfig cfg = train_config_from_json(parse_json_file(a.config));
  if (!a.data.empty()) cfg.datasets = {{a.data, cfg.model.task_mode}};
  if (a.seed_set) cfg.seed = a.seed;
  const auto data = load_datasets(cfg);
  const AblationResult res = run_ablation(a.suite, cfg, data, a.out);

  Manifest man;
  man.command = "ablate";
  man.config = train_config_to_json(cfg);
  man.config["suite"] = a.suite;
  man.seed = cfg.seed;
  man.input_paths.push_back(a.config);
  for (const DatasetSpec& d : cfg.datasets) man.input_paths.push_back(d.path);
  man.output_paths.push_back(res.csv_path);
  for (const std::string& f : res.extra_files) man.output_paths.push_back(f);
  write_manifest((fs::path(a.out) / "run_manifest.json").string(), man);

  for (const AblationRow& row : res.rows)
    std::cout << row.variant << ": params " << row.params << ", min_ade " << row.min_ade << "\n";
  std::cout << "table -> " << res.csv_path << "\n";
  return 0;
}

// ---- verify ---------------------------------------------------------------

int cmd_verify(const std::string& out_path) {
  const std::vector<CheckResult> checks = run_verification();
  double total = 0.0;
  std::vector<std::string> failed;
  ordered_json rows = ordered_json::array();
  for (const CheckResult& c : checks) {
    total += c.seconds;
    std::printf("%s %-20s %6.2fs  %s\n", c.passed ? "PASS" : "FAIL", c.name.c_str(), c.seconds,
                c.detail.c_str());
    if (!c.passed) failed.push_back(c.name);
    rows.push_back(ordered_json{{"name", c.name},
                                {"passed", c.passed},
                                {"seconds", c.seconds},
                                {"detail", c.detail}});
  }
  if (total > 300.0)
    std::printf("warning: battery took %.0fs, expected under 300s\n", total);
  if (!failed.empty()) {
    std::printf("%zu of %zu checks failed:", failed.size(), checks.size());
    for (const std::string& f : failed) std::printf(" %s", f.c_str());
    std::printf("\n");
  } else {
    std::printf("all %zu checks passed in %.2fs\n", checks.size(), total);
  }

  ordered_json j;
  j["all_passed"] = failed.empty();
  j["checks"] = std::move(rows);
  write_text(out_path, j.dump(2) + "\n");
  Manifest man;
  man.command = "verify";
  man.output_paths = {out_path};
  write_manifest(out_path + ".manifest.json", man);
  return failed.empty() ? 0 : 1;
}

// ---- bench ----------------------------------------------------------------

struct BenchArgs {
  std::string config;
  std::string data;
  std::string out = "bench_report.json";
  std::size_t repeats = 10;
};

struct Throughput {
  double mean = 0.0;
  double std_dev = 0.0;
};

Throughput summarize(const std::vector<double>& samples_per_sec) {
  Throughput t;
  for (double v : samples_per_sec) t.mean += v;
  t.mean /= double(samples_per_sec.size());
  double ss = 0.0;
  for (double v : samples_per_sec) ss += (v - t.mean) * (v - t.mean);
  t.std_dev = std::sqrt(ss / double(samples_per_sec.size() - 1));
  return t;
}

int cmd_bench(const BenchArgs& a) {
  if (a.repeats < 2) throw ConfigError("repeats must be ≥ 2");
  const TrainConfig cfg = train_config_from_json(parse_json_file(a.config));
  const ModelConfig& mc = cfg.model;
  const std::vector<MotionSequence> raw = read_sequences(a.data);
  if (raw.empty()) throw DataError("\"" + a.data + "\" holds no sequences");

  std::vector<NormalizedSample> samples;
  std::vector<TaskMode> routes;
  for (const MotionSequence& seq : raw) {
    if (!task_covers(mc.task_mode, seq.task_mode))
      throw ConfigError("model task_mode " + std::string(to_string(mc.task_mode)) +
                        " cannot serve a " + to_string(seq.task_mode) + " sequence");
    samples.push_back(normalize(seq, mc.H, mc.F));
    routes.push_back(seq.task_mode);
  }

  ModelParams params = init_params(mc, cfg.seed);
  using Clock = std::chrono::steady_clock;

  std::vector<double> forward_rates;
  for (std::size_t r = 0; r < a.repeats; ++r) {
    const auto t0 = Clock::now();
    for (std::size_t i = 0; i < samples.size(); ++i)
      model_forward_routed(samples[i], params, mc, routes[i]);
    const double dt = std::chrono::duration<double>(Clock::now() - t0).count();
    forward_rates.push_back(double(samples.size()) / dt);
  }

  std::vector<Tensor> flat = collect_params(params, mc);
  OptimizerState opt_state = make_optimizer_state(flat);
  AdamwConfig opt_cfg;
  opt_cfg.lr = cfg.lr;
  opt_cfg.beta1 = cfg.beta1;
  opt_cfg.beta2 = cfg.beta2;
  opt_cfg.weight_decay = cfg.weight_decay;
  std::vector<double> train_rates;
  for (std::size_t r = 0; r < a.repeats; ++r) {
    const auto t0 = Clock::now();
    for (std::size_t start = 0; start < samples.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(samples.size(), start + cfg.batch_size);
      Graph graph;
      std::vector<Tensor> losses;
      for (std::size_t i = start; i < end; ++i) {
        ProposalSet out = model_forward_routed(samples[i], params, mc, routes[i]);
        losses.push_back(reshape(wta_loss(samples[i], out).loss, {1}));
      }
      Tensor batch_loss = mean_all(concat(losses, 0));
      graph.backward(batch_loss);
      clip_global_norm(flat, cfg.clip_norm);
      adamw_step(flat, opt_state, opt_cfg);
      for (Tensor& t : flat) t.zero_grad();
    }
    const double dt = std::chrono::duration<double>(Clock::now() - t0).count();
    train_rates.push_back(double(samples.size()) / dt);
  }

  const Throughput fwd = summarize(forward_rates);
  const Throughput trn = summarize(train_rates);
  std::printf("forward:    %.1f ± %.1f samples/s over %zu repeats\n", fwd.mean, fwd.std_dev,
              a.repeats);
  std::printf("train-step: %.1f ± %.1f samples/s over %zu repeats\n", trn.mean, trn.std_dev,
              a.repeats);

  ordered_json j;
  j["repeats"] = a.repeats;
  j["n_samples"] = samples.size();
  j["forward"] = {{"mean_samples_per_sec", fwd.mean}, {"std_samples_per_sec", fwd.std_dev}};
  j["train_step"] = {{"mean_samples_per_sec", trn.mean}, {"std_samples_per_sec", trn.std_dev}};
  write_text(a.out, j.dump(2) + "\n");

  Manifest man;
  man.command = "bench";
  man.config = train_config_to_json(cfg);
  man.config["repeats"] = a.repeats;
  man.seed = cfg.seed;
  man.input_paths = {a.config, a.data};
  man.output_paths = {a.out};
  write_manifest(a.out + ".manifest.json", man);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"SimpliHuMoN: unified transformer for human motion prediction"};
  app.require_subcommand(1);

  SynthArgs synth_args;
  CLI::App* synth = app.add_subcommand("synth", "Generate a synthetic sequence file");
  synth->add_option("--scenario", synth_args.scenario, "const_velocity, sine_gait_walker, fork_turn")
      ->required();
  synth->add_option("--count", synth_args.count, "Number of sequences")->required();
  synth->add_option("--timesteps", synth_args.timesteps, "Frames per sequence");
  synth->add_option("--m", synth_args.m, "Joints per frame");
  synth->add_option("--seed", synth_args.seed, "Generator seed");
  synth->add_option("--out", synth_args.out, "Output sequence file")->required();
  synth->add_option("--turn-frame", synth_args.turn_frame, "fork_turn: frame the turn starts at");

  std::string train_config, train_out;
  CLI::App* train_cmd = app.add_subcommand("train", "Train a model from a JSON config");
  train_cmd->add_option("--config", train_config, "Training config JSON")->required();
  train_cmd->add_option("--out", train_out, "Output directory")->required();

  EvalArgs eval_args;
  CLI::App* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint on a sequence file");
  eval_cmd->add_option("--checkpoint", eval_args.checkpoint, "Checkpoint prefix")->required();
  eval_cmd->add_option("--data", eval_args.data, "Sequence file")->required();
  eval_cmd->add_option("--out", eval_args.out, "Metric report JSON path")->required();
  eval_cmd->add_option("--k", eval_args.k, "Evaluate only the first k branches (0: all)");
  eval_cmd->add_option("--timesteps", eval_args.timesteps, "1-based future steps for FDE/APE/JPE")
      ->delimiter(',');

  AblateArgs ablate_args;
  CLI::App* ablate_cmd = app.add_subcommand("ablate", "Run an ablation suite");
  ablate_cmd->add_option("--suite", ablate_args.suite, "Suite name")->required();
  ablate_cmd->add_option("--config", ablate_args.config, "Base training config JSON")->required();
  ablate_cmd->add_option("--data", ablate_args.data,
                         "Sequence file replacing the config's datasets");
  ablate_cmd->add_option("--out", ablate_args.out, "Output directory")->required();
  CLI::Option* seed_opt =
      ablate_cmd->add_option("--seed", ablate_args.seed, "Override the config seed");

  std::string verify_out = "verify_report.json";
  CLI::App* verify_cmd = app.add_subcommand("verify", "Run the invariant battery");
  verify_cmd->add_option("--out", verify_out, "Report JSON path");

  BenchArgs bench_args;
  CLI::App* bench_cmd = app.add_subcommand("bench", "Measure forward and train-step throughput");
  bench_cmd->add_option("--config", bench_args.config, "Training config JSON")->required();
  bench_cmd->add_option("--data", bench_args.data, "Sequence file")->required();
  bench_cmd->add_option("--repeats", bench_args.repeats, "Timing repeats (≥ 2)");
  bench_cmd->add_option("--out", bench_args.out, "Report JSON path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n";
    return 2;
  }

  try {
    if (app.got_subcommand(synth)) return cmd_synth(synth_args);
    if (app.got_subcommand(train_cmd)) return cmd_train(train_config, train_out);
    if (app.got_subcommand(eval_cmd)) return cmd_eval(eval_args);
    if (app.got_subcommand(ablate_cmd)) {
      ablate_args.seed_set = seed_opt->count() > 0;
      return cmd_ablate(ablate_args);
    }
    if (app.got_subcommand(verify_cmd)) return cmd_verify(verify_out);
    if (app.got_subcommand(bench_cmd)) return cmd_bench(bench_args);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
