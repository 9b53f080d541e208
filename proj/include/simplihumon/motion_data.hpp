#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "simplihumon/proposal.hpp"
#include "simplihumon/tensor.hpp"

namespace simplihumon {

/// Bad user-supplied configuration or flags (CLI exit code 2).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed or inconsistent data files.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class TaskMode { traj_only, pose_only, joint };

const char* to_string(TaskMode m);
TaskMode task_mode_from_string(const std::string& s);  // throws ConfigError

/// True when `capability` covers `requested` (joint covers the single modes).
bool task_covers(TaskMode capability, TaskMode requested);
bool task_has_traj(TaskMode m);
bool task_has_pose(TaskMode m);

// "synth" is an artifact-local skeleton with a free joint count for generated
// data; it has no canonical mapping table.
enum class SkeletonId { canonical22, human36m, mocap_umpm, tdpw, traj_point, synth };

const char* to_string(SkeletonId s);
SkeletonId skeleton_from_string(const std::string& s);  // throws ConfigError
/// Joints required by the skeleton; 0 means unconstrained (synth).
std::size_t skeleton_joint_count(SkeletonId s);

extern const std::array<const char*, 22> kCanonicalJointNames;
std::size_t canonical_index(const std::string& joint_name);  // throws ConfigError

/// One source skeleton's joints in file order: (source joint name, canonical
/// slot). Aliases map extra source spellings onto the same slot.
struct SkeletonMapping {
  std::vector<std::pair<std::string, std::size_t>> joints;
  std::vector<std::pair<std::string, std::size_t>> aliases;
};

const SkeletonMapping& source_mapping(SkeletonId s);  // throws ConfigError when none exists

struct MotionSequence {
  std::string dataset_id;
  std::string agent_id;
  double fps = 25.0;
  SkeletonId skeleton_id = SkeletonId::canonical22;
  TaskMode task_mode = TaskMode::joint;
  std::size_t root_joint_index = 0;
  std::vector<std::vector<std::array<double, 3>>> frames;  // T frames of M world-space joints, meters

  std::size_t frame_count() const { return frames.size(); }
  std::size_t joint_count() const { return frames.empty() ? 0 : frames[0].size(); }
};

/// Enforces the record invariants: at least two frames, joint count matching
/// the skeleton, finite coordinates, valid root index.
void validate_sequence(const MotionSequence& seq);  // throws DataError

struct CanonicalMapResult {
  MotionSequence sequence;             // canonical22 layout, 22 joints
  std::vector<std::uint8_t> valid;     // per canonical slot
};

/// Copies present joints into their canonical slots, zero-fills and masks the
/// rest, and carries the root index through the mapping.
CanonicalMapResult map_to_canonical(const MotionSequence& seq);

/// Same mapping driven by an explicit table, so a corrupted copy can be fed
/// in as a negative control.
CanonicalMapResult map_to_canonical(const MotionSequence& seq, const SkeletonMapping& table);

struct NormalizedSample {
  TaskMode task = TaskMode::joint;
  std::array<double, 3> anchor{};         // world root position at the last past frame
  std::size_t root_index = 0;
  Tensor T_past;                          // {H, 3}, present when task has a trajectory stream
  Tensor P_past;                          // {H, M, 3}, present when task has a pose stream
  Tensor gt_traj;                         // {F, 3}
  Tensor gt_pose;                         // {F, M, 3}
  std::vector<std::uint8_t> joint_valid;  // per joint; empty means all valid

  std::size_t past_frames() const;
  std::size_t future_frames() const;
  std::size_t joints() const { return P_past.defined() ? P_past.shape()[1] : 0; }
};

NormalizedSample normalize(const MotionSequence& seq, std::size_t H, std::size_t F);
NormalizedSample normalize(const MotionSequence& seq, std::size_t H, std::size_t F,
                           const std::vector<std::uint8_t>& joint_valid);

/// Adds the anchor back onto every trajectory position; pose stays
/// root-relative.
ProposalSet denormalize(const ProposalSet& proposals, const std::array<double, 3>& anchor);

/// World-frame joints {K, F, M, 3}: relative pose plus the (already
/// denormalized) trajectory. Requires both streams.
Tensor world_pose_export(const ProposalSet& proposals);

std::vector<std::array<double, 3>> pad_2d_to_3d(const std::vector<std::array<double, 2>>& points);

enum class SynthScenario { const_velocity, sine_gait_walker, fork_turn };
const char* to_string(SynthScenario s);
SynthScenario scenario_from_string(const std::string& s);  // throws ConfigError

/// Deterministic per (seed, index). M=1 produces traj_point/traj_only
/// records; larger M produces synth-skeleton joint records. fork_turn walks
/// straight until turn_frame (default T/2, the intended past horizon), then
/// turns the heading 45 degrees left or right with equal probability.
std::vector<MotionSequence> synth_generate(SynthScenario scenario, std::size_t count,
                                           std::size_t T, std::size_t M, std::uint64_t seed,
                                           std::optional<std::size_t> turn_frame = std::nullopt);

struct Batch {
  std::string dataset_id;
  std::vector<std::size_t> indices;  // into that dataset's sequence list
};

/// Dataset-balanced batching: per epoch every dataset contributes the same
/// number of homogeneous batches (the minimum floor(size/batch) across
/// datasets), samples drawn without replacement per pass and reshuffled on
/// exhaustion, batch order interleaved by a seeded shuffle.
class BatchScheduler {
 public:
  BatchScheduler(std::vector<std::pair<std::string, std::size_t>> dataset_sizes,
                 std::size_t batch_size, std::uint64_t seed);

  std::vector<Batch> next_epoch();
  std::size_t batches_per_dataset() const { return batches_per_dataset_; }

 private:
  struct Pool {
    std::string id;
    std::vector<std::size_t> order;
    std::size_t pos = 0;
  };
  std::vector<Pool> pools_;
  std::size_t batch_size_;
  std::size_t batches_per_dataset_;
  std::mt19937_64 rng_;
};

/// One epoch of a fresh scheduler.
std::vector<Batch> balanced_batches(
    const std::vector<std::pair<std::string, std::size_t>>& dataset_sizes,
    std::size_t batch_size, std::uint64_t seed);

std::vector<MotionSequence> read_sequences(const std::string& path);  // throws DataError with line numbers
void write_sequences(const std::string& path, const std::vector<MotionSequence>& seqs);

// Optional training augmentation, off by default.
MotionSequence mirror_sequence(const MotionSequence& seq);  // reflect y, swap paired L/R joints
MotionSequence yaw_rotate_sequence(const MotionSequence& seq, double angle);

}  // namespace simplihumon
