#include "simplihumon/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

namespace simplihumon {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

// ---- optimizer -------------------------------------------------------------

OptimizerState make_optimizer_state(const std::vector<Tensor>& params) {
  OptimizerState s;
  s.m.reserve(params.size());
  s.v.reserve(params.size());
  for (const Tensor& t : params) {
    s.m.emplace_back(t.numel(), 0.0);
    s.v.emplace_back(t.numel(), 0.0);
  }
  return s;
}

void adamw_step(std::vector<Tensor>& params, OptimizerState& state, const AdamwConfig& cfg) {
  if (state.m.size() != params.size() || state.v.size() != params.size())
    throw ShapeError("adamw_step: optimizer state tracks " + std::to_string(state.m.size()) +
                     " parameters, got " + std::to_string(params.size()));
  state.step += 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    std::vector<double>& p = params[i].mutable_data();
    std::vector<double>& m = state.m[i];
    std::vector<double>& v = state.v[i];
    if (m.size() != p.size())
      throw ShapeError("adamw_step: parameter " + std::to_string(i) +
                       " changed size under the optimizer");
    const bool has = params[i].has_grad();
    const std::vector<double>* g = has ? &params[i].grad() : nullptr;
    for (std::size_t j = 0; j < p.size(); ++j) {
      const double gj = g ? (*g)[j] : 0.0;
      m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * gj;
      v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * gj * gj;
      const double mhat = m[j] / bc1;
      const double vhat = v[j] / bc2;
      const double prev = p[j];
      p[j] = prev - cfg.lr * cfg.weight_decay * prev - cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
    }
  }
}

double clip_global_norm(std::vector<Tensor>& params, double clip) {
  double sq = 0.0;
  for (Tensor& t : params)
    if (t.has_grad())
      for (double g : t.grad()) sq += g * g;
  const double norm = std::sqrt(sq);
  if (clip > 0.0 && norm > clip) {
    const double s = clip / norm;
    for (Tensor& t : params)
      if (t.has_grad())
        for (double& g : t.node()->grad) g *= s;
  }
  return norm;
}

// ---- config ----------------------------------------------------------------

namespace {

void validate_train_config(const TrainConfig& c) {
  validate_config(c.model);
  if (!(c.lr > 0.0)) throw ConfigError("train config: lr must be > 0");
  if (c.beta1 < 0.0 || c.beta1 >= 1.0) throw ConfigError("train config: betas[0] must be in [0, 1)");
  if (c.beta2 < 0.0 || c.beta2 >= 1.0) throw ConfigError("train config: betas[1] must be in [0, 1)");
  if (c.weight_decay < 0.0) throw ConfigError("train config: weight_decay must be >= 0");
  if (c.epochs < 1) throw ConfigError("train config: epochs must be >= 1");
  if (c.batch_size < 1) throw ConfigError("train config: batch_size must be >= 1");
  if (c.clip_norm < 0.0) throw ConfigError("train config: clip_norm must be >= 0");
  if (c.datasets.empty()) throw ConfigError("train config: datasets must list at least one entry");
  for (const DatasetSpec& d : c.datasets)
    if (!task_covers(c.model.task_mode, d.task))
      throw ConfigError("train config: dataset \"" + d.path + "\" routes task " +
                        std::string(to_string(d.task)) + " which model task_mode " +
                        std::string(to_string(c.model.task_mode)) + " cannot serve");
}

double read_real(const json& j, const char* key, double fallback) {
  auto it = j.find(key);
  if (it == j.end()) return fallback;
  if (!it->is_number()) throw ConfigError("train config field \"" + std::string(key) + "\" must be a number");
  return it->get<double>();
}

std::size_t read_count(const json& j, const char* key, std::size_t fallback) {
  auto it = j.find(key);
  if (it == j.end()) return fallback;
  if (!it->is_number_unsigned())
    throw ConfigError("train config field \"" + std::string(key) +
                      "\" must be a non-negative integer");
  return it->get<std::size_t>();
}

bool read_flag(const json& j, const char* key, bool fallback) {
  auto it = j.find(key);
  if (it == j.end()) return fallback;
  if (!it->is_boolean()) throw ConfigError("train config field \"" + std::string(key) + "\" must be a boolean");
  return it->get<bool>();
}

}  // namespace

TrainConfig train_config_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("train config must be a JSON object");
  static const char* known[] = {"schema_version", "model",      "lr",          "betas",
                                "weight_decay",   "epochs",     "batch_size",  "seed",
                                "augment_mirror", "augment_yaw", "eval_every", "clip_norm",
                                "datasets"};
  for (const auto& item : j.items()) {
    bool ok = false;
    for (const char* k : known) ok = ok || item.key() == k;
    if (!ok) throw ConfigError("unknown train config field \"" + item.key() + "\"");
  }
  if (auto it = j.find("schema_version"); it != j.end()) {
    if (!it->is_number_integer() || it->get<long long>() != 1)
      throw ConfigError("train config field \"schema_version\" must be 1");
  }
  TrainConfig c;
  if (auto it = j.find("model"); it != j.end())
    c.model = config_from_json(*it);
  c.lr = read_real(j, "lr", c.lr);
  if (auto it = j.find("betas"); it != j.end()) {
    if (!it->is_array() || it->size() != 2 || !(*it)[0].is_number() || !(*it)[1].is_number())
      throw ConfigError("train config field \"betas\" must be an array of two numbers");
    c.beta1 = (*it)[0].get<double>();
    c.beta2 = (*it)[1].get<double>();
  }
  c.weight_decay = read_real(j, "weight_decay", c.weight_decay);
  c.epochs = read_count(j, "epochs", c.epochs);
  c.batch_size = read_count(j, "batch_size", c.batch_size);
  c.seed = read_count(j, "seed", c.seed);
  c.augment_mirror = read_flag(j, "augment_mirror", c.augment_mirror);
  c.augment_yaw = read_flag(j, "augment_yaw", c.augment_yaw);
  c.eval_every = read_count(j, "eval_every", c.eval_every);
  c.clip_norm = read_real(j, "clip_norm", c.clip_norm);
  auto ds = j.find("datasets");
  if (ds == j.end() || !ds->is_array() || ds->empty())
    throw ConfigError("train config field \"datasets\" must be a non-empty array");
  for (const json& e : *ds) {
    if (!e.is_object() || !e.contains("path") || !e["path"].is_string())
      throw ConfigError("train config field \"datasets\" entries need a string \"path\"");
    for (const auto& item : e.items())
      if (item.key() != "path" && item.key() != "task")
        throw ConfigError("unknown dataset field \"" + item.key() + "\"");
    DatasetSpec spec;
    spec.path = e["path"].get<std::string>();
    if (e.contains("task")) {
      if (!e["task"].is_string())
        throw ConfigError("train config field \"datasets[].task\" must be a string");
      spec.task = task_mode_from_string(e["task"].get<std::string>());
    } else {
      spec.task = c.model.task_mode;
    }
    c.datasets.push_back(std::move(spec));
  }
  validate_train_config(c);
  return c;
}

ordered_json train_config_to_json(const TrainConfig& c) {
  ordered_json ds = ordered_json::array();
  for (const DatasetSpec& d : c.datasets)
    ds.push_back(ordered_json{{"path", d.path}, {"task", to_string(d.task)}});
  return ordered_json{
      {"schema_version", 1},
      {"model", config_to_json(c.model)},
      {"lr", c.lr},
      {"betas", {c.beta1, c.beta2}},
      {"weight_decay", c.weight_decay},
      {"epochs", c.epochs},
      {"batch_size", c.batch_size},
      {"seed", c.seed},
      {"augment_mirror", c.augment_mirror},
      {"augment_yaw", c.augment_yaw},
      {"eval_every", c.eval_every},
      {"clip_norm", c.clip_norm},
      {"datasets", std::move(ds)},
  };
}

// ---- evaluation ------------------------------------------------------------

namespace {

std::size_t eval_threads() {
  const char* env = std::getenv("SIMPLIHUMON_THREADS");
  if (!env || !*env) return 1;
  char* end = nullptr;
  const unsigned long n = std::strtoul(env, &end, 10);
  if (end == env || *end != '\0' || n < 1) return 1;
  return std::min<std::size_t>(n, 64);
}

struct SampleEval {
  double ade = 0.0;
  std::map<std::size_t, double> fde_at, ape_at, jpe_at;
  std::size_t winner = 0;
};

Tensor world_ground_truth(const NormalizedSample& s) {
  const Shape& ps = s.gt_pose.shape();
  std::vector<double> w(s.gt_pose.data());
  const std::size_t M = ps[1];
  for (std::size_t t = 0; t < ps[0]; ++t)
    for (std::size_t m = 0; m < M; ++m)
      for (std::size_t c = 0; c < 3; ++c)
        w[(t * M + m) * 3 + c] += s.gt_traj.data()[t * 3 + c];
  return Tensor::from_data(ps, std::move(w));
}

ProposalSet limit_branches(const ProposalSet& full, std::size_t k) {
  ProposalSet out;
  if (full.traj.defined())
    out.traj = full.traj.shape()[0] == k ? full.traj : slice(full.traj, 0, 0, k);
  if (full.pose.defined())
    out.pose = full.pose.shape()[0] == k ? full.pose : slice(full.pose, 0, 0, k);
  return out;
}

SampleEval evaluate_one(const MotionSequence& seq, ModelParams& params, const ModelConfig& config,
                        std::size_t k, const std::vector<std::size_t>& steps) {
  const TaskMode task = seq.task_mode;
  if (!task_covers(config.task_mode, task))
    throw ConfigError("sequence " + seq.dataset_id + "/" + seq.agent_id + " carries task " +
                      std::string(to_string(task)) + " which model task_mode " +
                      std::string(to_string(config.task_mode)) + " cannot serve");
  NormalizedSample s = normalize(seq, config.H, config.F);
  ProposalSet out = limit_branches(model_forward_routed(s, params, config, task), k);
  const std::vector<std::uint8_t>& mask = s.joint_valid;

  SampleEval r;
  r.winner = wta_loss(s, out).winner;
  if (task == TaskMode::traj_only) {
    r.ade = min_over_k([](const Tensor& g, const Tensor& p) { return ade(g, p); }, s.gt_traj,
                       out.traj);
    for (std::size_t t : steps)
      r.fde_at[t] = min_over_k(
          [t](const Tensor& g, const Tensor& p) { return fde(g, p, t - 1); }, s.gt_traj, out.traj);
    return r;
  }
  if (task == TaskMode::pose_only) {
    r.ade = min_over_k([&mask](const Tensor& g, const Tensor& p) { return ade(g, p, mask); },
                       s.gt_pose, out.pose);
    for (std::size_t t : steps) {
      r.fde_at[t] = min_over_k(
          [t, &mask](const Tensor& g, const Tensor& p) { return fde(g, p, t - 1, mask); },
          s.gt_pose, out.pose);
      const std::size_t root = s.root_index;
      r.ape_at[t] = min_over_k(
          [t, root, &mask](const Tensor& g, const Tensor& p) {
            return ape(g, p, t - 1, root, mask);
          },
          s.gt_pose, out.pose);
    }
    return r;
  }
  // joint task: displacement on world joints, APE on the root-relative pose,
  // JPE on world joints at each reporting step
  Tensor world_gt = world_ground_truth(s);
  Tensor world_pred = world_pose_export(out);
  r.ade = min_over_k([&mask](const Tensor& g, const Tensor& p) { return ade(g, p, mask); },
                     world_gt, world_pred);
  for (std::size_t t : steps) {
    r.fde_at[t] = min_over_k(
        [t, &mask](const Tensor& g, const Tensor& p) { return fde(g, p, t - 1, mask); }, world_gt,
        world_pred);
    const std::size_t root = s.root_index;
    r.ape_at[t] = min_over_k(
        [t, root, &mask](const Tensor& g, const Tensor& p) { return ape(g, p, t - 1, root, mask); },
        s.gt_pose, out.pose);
    r.jpe_at[t] = min_over_k(
        [t, &mask](const Tensor& g, const Tensor& p) { return jpe(g, p, t - 1, mask); }, world_gt,
        world_pred);
  }
  return r;
}

}  // namespace

MetricReport evaluate(ModelParams& params, const ModelConfig& config,
                      const std::vector<MotionSequence>& data, const EvalOptions& opt) {
  validate_config(config);
  if (data.empty()) throw DataError("evaluation set is empty");
  std::size_t k = opt.k == 0 ? config.K : opt.k;
  if (k < 1 || k > config.K)
    throw ConfigError("k=" + std::to_string(opt.k) + " outside valid range [1, " +
                      std::to_string(config.K) + "]");
  std::vector<std::size_t> steps = opt.timesteps;
  if (steps.empty()) steps.push_back(config.F);
  for (std::size_t t : steps)
    if (t < 1 || t > config.F)
      throw ConfigError("timestep " + std::to_string(t) + " outside valid range [1, " +
                        std::to_string(config.F) + "]");

  std::vector<SampleEval> results(data.size());
  const std::size_t nthreads = std::min(eval_threads(), data.size());
  if (nthreads <= 1) {
    for (std::size_t i = 0; i < data.size(); ++i)
      results[i] = evaluate_one(data[i], params, config, k, steps);
  } else {
    std::exception_ptr first_error;
    std::mutex error_mu;
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < nthreads; ++w) {
      pool.emplace_back([&, w]() {
        for (std::size_t i = w; i < data.size(); i += nthreads) {
          try {
            results[i] = evaluate_one(data[i], params, config, k, steps);
          } catch (...) {
            std::lock_guard<std::mutex> lock(error_mu);
            if (!first_error) first_error = std::current_exception();
            return;
          }
        }
      });
    }
    for (std::thread& t : pool) t.join();
    if (first_error) std::rethrow_exception(first_error);
  }

  MetricReport rep;
  rep.n_samples = data.size();
  rep.winner_histogram.assign(k, 0);
  std::set<std::string> agents;
  std::map<std::size_t, std::pair<double, std::size_t>> fde_acc, ape_acc, jpe_acc;
  double ade_sum = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    agents.insert(data[i].agent_id);
    ade_sum += results[i].ade;
    rep.winner_histogram[results[i].winner] += 1;
    for (const auto& [t, v] : results[i].fde_at) {
      fde_acc[t].first += v;
      fde_acc[t].second += 1;
    }
    for (const auto& [t, v] : results[i].ape_at) {
      ape_acc[t].first += v;
      ape_acc[t].second += 1;
    }
    for (const auto& [t, v] : results[i].jpe_at) {
      jpe_acc[t].first += v;
      jpe_acc[t].second += 1;
    }
  }
  rep.min_ade = ade_sum / static_cast<double>(data.size());
  for (const auto& [t, acc] : fde_acc) rep.min_fde_at[t] = acc.first / static_cast<double>(acc.second);
  for (const auto& [t, acc] : ape_acc) rep.min_ape_at[t] = acc.first / static_cast<double>(acc.second);
  for (const auto& [t, acc] : jpe_acc) rep.min_jpe_at[t] = acc.first / static_cast<double>(acc.second);
  rep.n_agents = agents.size();
  return rep;
}

// ---- training loop ---------------------------------------------------------

namespace {

std::mt19937_64 augment_rng(std::uint64_t seed, std::size_t epoch, std::size_t batch,
                            std::size_t index) {
  std::seed_seq ss{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                   static_cast<std::uint32_t>(epoch), static_cast<std::uint32_t>(batch),
                   static_cast<std::uint32_t>(index), 0x41752AD5u};
  return std::mt19937_64(ss);
}

void check_datasets(const TrainConfig& cfg,
                    const std::vector<std::vector<MotionSequence>>& datasets) {
  if (datasets.size() != cfg.datasets.size())
    throw ConfigError("train: " + std::to_string(cfg.datasets.size()) +
                      " dataset specs but " + std::to_string(datasets.size()) +
                      " datasets supplied");
  const std::size_t need = cfg.model.H + cfg.model.F;
  for (std::size_t d = 0; d < datasets.size(); ++d) {
    if (datasets[d].empty())
      throw DataError("train: dataset \"" + cfg.datasets[d].path + "\" is empty");
    for (const MotionSequence& seq : datasets[d]) {
      if (seq.frame_count() < need)
        throw DataError("train: sequence " + seq.dataset_id + "/" + seq.agent_id + " has T=" +
                        std::to_string(seq.frame_count()) + " frames, need H+F=" +
                        std::to_string(need));
      if (task_has_pose(cfg.datasets[d].task) && seq.joint_count() != cfg.model.M)
        throw DataError("train: sequence " + seq.dataset_id + "/" + seq.agent_id + " has M=" +
                        std::to_string(seq.joint_count()) + " joints, model expects " +
                        std::to_string(cfg.model.M));
    }
  }
}

void write_epoch_line(std::ofstream& log, const EpochLogEntry& e) {
  ordered_json line{{"epoch", e.epoch},
                    {"mean_loss", e.mean_loss},
                    {"winner_histogram", e.winner_histogram},
                    {"wall_seconds", e.wall_seconds}};
  log << line.dump() << "\n";
  log.flush();
}

}  // namespace

TrainArtifacts train(const TrainConfig& cfg,
                     const std::vector<std::vector<MotionSequence>>& datasets,
                     const std::string& out_dir) {
  validate_train_config(cfg);
  check_datasets(cfg, datasets);
  fs::create_directories(out_dir);

  ModelParams params = init_params(cfg.model, cfg.seed);
  std::vector<Tensor> plist = collect_params(params, cfg.model);
  OptimizerState opt = make_optimizer_state(plist);
  const AdamwConfig acfg{cfg.lr, cfg.beta1, cfg.beta2, cfg.weight_decay, 1e-8};

  std::vector<std::pair<std::string, std::size_t>> sizes;
  for (std::size_t d = 0; d < datasets.size(); ++d)
    sizes.emplace_back(std::to_string(d) + ":" + cfg.datasets[d].path, datasets[d].size());
  BatchScheduler sched(sizes, cfg.batch_size, cfg.seed);

  TrainArtifacts art;
  art.log_path = (fs::path(out_dir) / "train_log.jsonl").string();
  art.checkpoint_prefix = (fs::path(out_dir) / "checkpoint").string();
  std::ofstream log(art.log_path, std::ios::trunc);
  if (!log) throw DataError("cannot open " + art.log_path + " for writing");

  // lazily built copies with the routing task stamped in, for mid-run eval
  std::vector<MotionSequence> eval_view;
  double best = std::numeric_limits<double>::infinity();

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    std::vector<Batch> batches = sched.next_epoch();
    double loss_sum = 0.0;
    std::size_t n_batches = 0;
    std::vector<std::size_t> hist(cfg.model.K, 0);

    for (std::size_t bi = 0; bi < batches.size(); ++bi) {
      const Batch& batch = batches[bi];
      const std::size_t ds = std::stoul(batch.dataset_id);  // index prefix of the pool id
      const TaskMode task = cfg.datasets[ds].task;
      try {
        Graph graph;
        std::vector<Tensor> losses;
        losses.reserve(batch.indices.size());
        for (std::size_t slot = 0; slot < batch.indices.size(); ++slot) {
          MotionSequence seq = datasets[ds][batch.indices[slot]];
          seq.task_mode = task;
          if (cfg.augment_mirror || cfg.augment_yaw) {
            std::mt19937_64 rng = augment_rng(cfg.seed, epoch, bi, slot);
            if (cfg.augment_mirror && seq.skeleton_id == SkeletonId::canonical22 &&
                (rng() & 1u))
              seq = mirror_sequence(seq);
            if (cfg.augment_yaw) {
              std::uniform_real_distribution<double> angle(0.0, 2.0 * 3.14159265358979323846);
              seq = yaw_rotate_sequence(seq, angle(rng));
            }
          }
          NormalizedSample s = normalize(seq, cfg.model.H, cfg.model.F);
          ProposalSet out = model_forward_routed(s, params, cfg.model, task);
          WtaResult w = wta_loss(s, out);
          hist[w.winner] += 1;
          losses.push_back(w.loss);
        }
        Tensor batch_loss = mean_all(losses.size() == 1 ? losses[0] : concat(losses, 0));
        loss_sum += batch_loss.item();
        n_batches += 1;
        graph.backward(batch_loss);
      } catch (const NumericError& e) {
        throw NumericError("training aborted at epoch " + std::to_string(epoch) + ", batch " +
                           std::to_string(bi) + ": " + e.what());
      }
      clip_global_norm(plist, cfg.clip_norm);
      adamw_step(plist, opt, acfg);
      for (Tensor& t : plist) t.zero_grad();
    }

    EpochLogEntry entry;
    entry.epoch = epoch;
    entry.mean_loss = loss_sum / static_cast<double>(n_batches);
    entry.winner_histogram = hist;
    entry.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    write_epoch_line(log, entry);
    art.log.push_back(entry);

    if (cfg.eval_every > 0 && epoch % cfg.eval_every == 0) {
      if (eval_view.empty()) {
        for (std::size_t d = 0; d < datasets.size(); ++d)
          for (const MotionSequence& seq : datasets[d]) {
            eval_view.push_back(seq);
            eval_view.back().task_mode = cfg.datasets[d].task;
          }
      }
      MetricReport rep = evaluate(params, cfg.model, eval_view);
      if (rep.min_ade < best) {
        best = rep.min_ade;
        art.best_checkpoint_prefix = (fs::path(out_dir) / "checkpoint_best").string();
        art.best_min_ade = best;
        save_checkpoint(art.best_checkpoint_prefix, params, cfg.model);
      }
    }
  }
  save_checkpoint(art.checkpoint_prefix, params, cfg.model);
  return art;
}

// ---- ablations -------------------------------------------------------------

namespace {

double map_last(const std::map<std::size_t, double>& m) {
  return m.empty() ? std::numeric_limits<double>::quiet_NaN() : m.rbegin()->second;
}

double histogram_max_share(const std::vector<std::size_t>& h) {
  std::size_t total = 0, top = 0;
  for (std::size_t v : h) {
    total += v;
    top = std::max(top, v);
  }
  return total == 0 ? 0.0 : static_cast<double>(top) / static_cast<double>(total);
}

struct Variant {
  std::string name;
  TrainConfig cfg;
  TaskMode eval_task;  // task stamped onto the evaluation view
};

std::vector<MotionSequence> task_view(const std::vector<std::vector<MotionSequence>>& datasets,
                                      TaskMode task) {
  std::vector<MotionSequence> view;
  for (const auto& d : datasets)
    for (const MotionSequence& seq : d) {
      view.push_back(seq);
      view.back().task_mode = task;
    }
  return view;
}

void retask(TrainConfig& c, TaskMode task) {
  c.model.task_mode = task;
  for (DatasetSpec& d : c.datasets) d.task = task;
}

std::string format_metric(double v) {
  std::ostringstream os;
  os.precision(9);
  os << v;
  return os.str();
}

/// Mean first-layer attention grid over up to `limit` sequences: unified
/// models average the layer-1 self-attention map, cross models the first
/// decoder layer's cross-attention, both over heads and samples.
void dump_attention_grid(const std::string& path, ModelParams& params, const ModelConfig& config,
                         const std::vector<MotionSequence>& view, std::size_t limit) {
  const std::size_t n = std::min(limit, view.size());
  std::vector<double> grid;
  std::size_t rows = 0, cols = 0, heads = 0;
  for (std::size_t i = 0; i < n; ++i) {
    NormalizedSample s = normalize(view[i], config.H, config.F);
    DecoderResult dec;
    model_forward_routed(s, params, config, view[i].task_mode, &dec);
    const Tensor& map = config.attn_variant == AttnVariant::unified ? dec.self_attn.front()
                                                                    : dec.cross_attn.front();
    heads = map.shape()[0];
    rows = map.shape()[1];
    cols = map.shape()[2];
    if (grid.empty()) grid.assign(rows * cols, 0.0);
    for (std::size_t h = 0; h < heads; ++h)
      for (std::size_t r = 0; r < rows * cols; ++r)
        grid[r] += map.data()[h * rows * cols + r];
  }
  const double denom = static_cast<double>(n * heads);
  for (double& v : grid) v /= denom;

  const bool both = task_has_traj(config.task_mode) && task_has_pose(config.task_mode);
  const std::size_t c_tokens = (both ? 2 : 1) * config.H;
  const std::size_t q_tokens = (both ? 2 : 1) * config.F;
  ordered_json out{{"variant", to_string(config.attn_variant)},
                   {"layer", 1},
                   {"rows", rows},
                   {"cols", cols},
                   {"c_tokens", c_tokens},
                   {"q_tokens", q_tokens},
                   {"samples", n}};
  ordered_json jgrid = ordered_json::array();
  for (std::size_t r = 0; r < rows; ++r) {
    ordered_json row = ordered_json::array();
    for (std::size_t c = 0; c < cols; ++c) row.push_back(grid[r * cols + c]);
    jgrid.push_back(std::move(row));
  }
  out["grid"] = std::move(jgrid);
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw DataError("cannot open " + path + " for writing");
  f << out.dump(2) << "\n";
}

}  // namespace

const std::vector<std::string>& ablation_suites() {
  static const std::vector<std::string> suites = {"attention_variant", "norm_variant",
                                                  "type_embedding", "k_modes",
                                                  "modality_exchange"};
  return suites;
}

AblationResult run_ablation(const std::string& suite, const TrainConfig& base,
                            const std::vector<std::vector<MotionSequence>>& datasets,
                            const std::string& out_dir) {
  validate_train_config(base);
  check_datasets(base, datasets);
  const auto& suites = ablation_suites();
  if (std::find(suites.begin(), suites.end(), suite) == suites.end()) {
    std::string names;
    for (const std::string& s : suites) names += (names.empty() ? "" : ", ") + s;
    throw ConfigError("unknown ablation suite \"" + suite + "\" (expected one of: " + names + ")");
  }
  fs::create_directories(out_dir);

  std::vector<Variant> variants;
  if (suite == "attention_variant") {
    for (AttnVariant a : {AttnVariant::unified, AttnVariant::cross}) {
      Variant v{to_string(a), base, base.model.task_mode};
      v.cfg.model.attn_variant = a;
      variants.push_back(std::move(v));
    }
  } else if (suite == "norm_variant") {
    for (NormVariant nv : {NormVariant::rmsnorm, NormVariant::layernorm}) {
      Variant v{to_string(nv), base, base.model.task_mode};
      v.cfg.model.norm_variant = nv;
      variants.push_back(std::move(v));
    }
  } else if (suite == "type_embedding") {
    for (bool on : {true, false}) {
      Variant v{on ? "type_on" : "type_off", base, base.model.task_mode};
      v.cfg.model.type_embedding_enabled = on;
      variants.push_back(std::move(v));
    }
  } else if (suite == "k_modes") {
    for (std::size_t k : {std::size_t{1}, base.model.K}) {
      Variant v{"k" + std::to_string(k), base, base.model.task_mode};
      v.cfg.model.K = k;
      variants.push_back(std::move(v));
    }
  } else {  // modality_exchange
    for (std::size_t d = 0; d < datasets.size(); ++d)
      for (const MotionSequence& seq : datasets[d])
        if (seq.task_mode != TaskMode::joint)
          throw ConfigError("modality_exchange needs joint-capability data, got task " +
                            std::string(to_string(seq.task_mode)) + " in \"" +
                            base.datasets[d].path + "\"");
    Variant traj{"traj_only", base, TaskMode::traj_only};
    retask(traj.cfg, TaskMode::traj_only);
    Variant pose{"pose_only", base, TaskMode::pose_only};
    retask(pose.cfg, TaskMode::pose_only);
    Variant joint{"joint", base, TaskMode::joint};
    retask(joint.cfg, TaskMode::joint);
    variants = {std::move(traj), std::move(pose), std::move(joint)};
  }

  AblationResult result;
  result.csv_path = (fs::path(out_dir) / "ablation.csv").string();
  std::ofstream csv(result.csv_path, std::ios::trunc);
  if (!csv) throw DataError("cannot open " + result.csv_path + " for writing");
  csv << "variant,params,min_ade,min_fde,min_ape,min_jpe,max_share\n";

  ordered_json k_histograms = ordered_json::object();
  for (const Variant& variant : variants) {
    const std::string run_dir = (fs::path(out_dir) / (suite + "_" + variant.name)).string();
    train(variant.cfg, datasets, run_dir);
    Checkpoint ckpt = load_checkpoint((fs::path(run_dir) / "checkpoint").string());

    std::vector<MotionSequence> view = task_view(datasets, variant.eval_task);
    MetricReport rep = evaluate(ckpt.params, ckpt.config, view);

    auto emit_row = [&](const std::string& name, const MetricReport& r, const ModelConfig& mc) {
      AblationRow row;
      row.variant = name;
      row.params = parameter_count(mc);
      row.min_ade = r.min_ade;
      row.min_fde = map_last(r.min_fde_at);
      row.min_ape = map_last(r.min_ape_at);
      row.min_jpe = map_last(r.min_jpe_at);
      row.max_share = histogram_max_share(r.winner_histogram);
      csv << row.variant << "," << row.params << "," << format_metric(row.min_ade) << ","
          << format_metric(row.min_fde) << "," << format_metric(row.min_ape) << ","
          << format_metric(row.min_jpe) << "," << format_metric(row.max_share) << "\n";
      result.rows.push_back(std::move(row));
    };
    emit_row(variant.name, rep, ckpt.config);

    if (suite == "attention_variant") {
      const std::string grid_path =
          (fs::path(out_dir) / ("attention_" + variant.name + ".json")).string();
      dump_attention_grid(grid_path, ckpt.params, ckpt.config, view, variant.cfg.batch_size);
      result.extra_files.push_back(grid_path);
    }
    if (suite == "k_modes")
      k_histograms[variant.name] =
          ordered_json{{"k", ckpt.config.K}, {"histogram", rep.winner_histogram}};
    if (suite == "modality_exchange" && variant.eval_task == TaskMode::joint) {
      // the joint model also reports each single-modality protocol
      for (TaskMode sub : {TaskMode::traj_only, TaskMode::pose_only}) {
        std::vector<MotionSequence> sub_view = task_view(datasets, sub);
        MetricReport sub_rep = evaluate(ckpt.params, ckpt.config, sub_view);
        emit_row("joint_as_" + std::string(to_string(sub)), sub_rep, ckpt.config);
      }
    }
  }
  if (suite == "k_modes") {
    const std::string hist_path = (fs::path(out_dir) / "k_modes_histograms.json").string();
    std::ofstream hf(hist_path, std::ios::trunc);
    hf << k_histograms.dump(2) << "\n";
    result.extra_files.push_back(hist_path);
  }
  return result;
}

}  // namespace simplihumon
