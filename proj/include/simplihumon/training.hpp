#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "simplihumon/checkpoint.hpp"
#include "simplihumon/metrics.hpp"
#include "simplihumon/model.hpp"

namespace simplihumon {

struct AdamwConfig {
  double lr = 3e-4;
  double beta1 = 0.95;
  double beta2 = 0.999;
  double weight_decay = 1e-4;
  double eps = 1e-8;
};

struct OptimizerState {
  std::vector<std::vector<double>> m;  // first moments, one array per parameter
  std::vector<std::vector<double>> v;  // second moments
  std::size_t step = 0;
};

OptimizerState make_optimizer_state(const std::vector<Tensor>& params);

/// One AdamW update from the gradients currently stored on the parameters.
/// Decoupled weight decay uses the pre-update values; a parameter with no
/// accumulated gradient only decays.
void adamw_step(std::vector<Tensor>& params, OptimizerState& state, const AdamwConfig& cfg);

/// Scales all gradients by clip/norm when the global L2 norm exceeds clip.
/// Returns the unclipped norm.
double clip_global_norm(std::vector<Tensor>& params, double clip);

struct DatasetSpec {
  std::string path;
  TaskMode task = TaskMode::joint;  // routing flag for every batch from this file
};

struct TrainConfig {
  ModelConfig model;
  double lr = 3e-4;
  double beta1 = 0.95;
  double beta2 = 0.999;
  double weight_decay = 1e-4;
  std::size_t epochs = 300;
  std::size_t batch_size = 64;
  std::uint64_t seed = 0;
  bool augment_mirror = false;
  bool augment_yaw = false;
  std::size_t eval_every = 0;  // 0: checkpoint only at the end
  double clip_norm = 1.0;      // 0 disables clipping
  std::vector<DatasetSpec> datasets;
};

TrainConfig train_config_from_json(const nlohmann::json& j);  // ConfigError names the field
nlohmann::ordered_json train_config_to_json(const TrainConfig& c);

struct EpochLogEntry {
  std::size_t epoch = 0;  // 1-based
  double mean_loss = 0.0;
  std::vector<std::size_t> winner_histogram;
  double wall_seconds = 0.0;
};

struct EvalOptions {
  std::size_t k = 0;                    // 0: use every branch the model has
  std::vector<std::size_t> timesteps;   // 1-based future steps; empty: {F}
};

/// Deterministic evaluation pass. Each sequence routes through the task its
/// own task_mode names (which the model must cover). min-over-k applies per
/// metric; the winner histogram uses the same winner-takes-all distance as
/// training. SIMPLIHUMON_THREADS > 1 shards samples; results reduce in
/// sample order either way.
MetricReport evaluate(ModelParams& params, const ModelConfig& config,
                      const std::vector<MotionSequence>& data, const EvalOptions& opt = {});

struct TrainArtifacts {
  std::string checkpoint_prefix;       // final weights: prefix.json / prefix.blob
  std::string best_checkpoint_prefix;  // empty unless eval_every produced one
  std::string log_path;
  std::vector<EpochLogEntry> log;
  double best_min_ade = 0.0;  // meaningful only when best_checkpoint_prefix set
};

/// Runs the training loop: balanced batches across datasets, each batch
/// routed by its dataset's task flag, per-batch mean WTA loss, global-norm
/// clipping, AdamW. Writes out_dir/train_log.jsonl plus out_dir/checkpoint
/// at the end and, every eval_every epochs, out_dir/checkpoint_best for the
/// lowest evaluated min_ade. Identical (config, data, seed) reproduce all
/// artifacts byte-for-byte except the wall_seconds log field.
TrainArtifacts train(const TrainConfig& cfg,
                     const std::vector<std::vector<MotionSequence>>& datasets,
                     const std::string& out_dir);

struct AblationRow {
  std::string variant;
  std::size_t params = 0;
  double min_ade = 0.0;
  double min_fde = 0.0;
  double min_ape = 0.0;  // NaN when the variant has no pose stream
  double min_jpe = 0.0;  // NaN when undefined for the variant's task
  double max_share = 0.0;
};

struct AblationResult {
  std::vector<AblationRow> rows;
  std::string csv_path;
  std::vector<std::string> extra_files;  // attention grids, histograms
};

/// Trains every variant of the named suite from the same seed and data,
/// evaluates identically, and writes out_dir/ablation.csv. The
/// attention_variant suite also dumps per-variant mean first-layer attention
/// grids; k_modes dumps the winner histograms.
AblationResult run_ablation(const std::string& suite, const TrainConfig& base,
                            const std::vector<std::vector<MotionSequence>>& datasets,
                            const std::string& out_dir);

const std::vector<std::string>& ablation_suites();

}  // namespace simplihumon
