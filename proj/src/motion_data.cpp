#include "simplihumon/motion_data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace simplihumon {

namespace {

using nlohmann::json;
using nlohmann::ordered_json;

constexpr double kPi = 3.14159265358979323846;

std::mt19937_64 record_rng(std::uint64_t seed, std::uint64_t index) {
  std::seed_seq ss{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                   static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32)};
  return std::mt19937_64(ss);
}

// Fisher-Yates with a plain modulo draw: deterministic across standard
// library implementations, unlike std::shuffle.
template <typename T>
void seeded_shuffle(std::vector<T>& v, std::mt19937_64& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    std::size_t j = static_cast<std::size_t>(rng() % i);
    std::swap(v[i - 1], v[j]);
  }
}

double uniform(std::mt19937_64& rng, double lo, double hi) {
  return lo + (hi - lo) * std::uniform_real_distribution<double>(0.0, 1.0)(rng);
}

}  // namespace

// ---- enums ----------------------------------------------------------------

const char* to_string(TaskMode m) {
  switch (m) {
    case TaskMode::traj_only: return "traj_only";
    case TaskMode::pose_only: return "pose_only";
    case TaskMode::joint: return "joint";
  }
  return "?";
}

TaskMode task_mode_from_string(const std::string& s) {
  if (s == "traj_only") return TaskMode::traj_only;
  if (s == "pose_only") return TaskMode::pose_only;
  if (s == "joint") return TaskMode::joint;
  throw ConfigError("task_mode: unknown value \"" + s +
                    "\" (expected traj_only, pose_only, or joint)");
}

bool task_has_traj(TaskMode m) { return m != TaskMode::pose_only; }
bool task_has_pose(TaskMode m) { return m != TaskMode::traj_only; }

bool task_covers(TaskMode capability, TaskMode requested) {
  if (capability == requested) return true;
  return capability == TaskMode::joint;
}

const char* to_string(SkeletonId s) {
  switch (s) {
    case SkeletonId::canonical22: return "canonical22";
    case SkeletonId::human36m: return "human36m";
    case SkeletonId::mocap_umpm: return "mocap_umpm";
    case SkeletonId::tdpw: return "tdpw";
    case SkeletonId::traj_point: return "traj_point";
    case SkeletonId::synth: return "synth";
  }
  return "?";
}

SkeletonId skeleton_from_string(const std::string& s) {
  if (s == "canonical22") return SkeletonId::canonical22;
  if (s == "human36m") return SkeletonId::human36m;
  if (s == "mocap_umpm") return SkeletonId::mocap_umpm;
  if (s == "tdpw") return SkeletonId::tdpw;
  if (s == "traj_point") return SkeletonId::traj_point;
  if (s == "synth") return SkeletonId::synth;
  throw ConfigError("skeleton_id: unknown value \"" + s + "\"");
}

std::size_t skeleton_joint_count(SkeletonId s) {
  switch (s) {
    case SkeletonId::canonical22: return 22;
    case SkeletonId::human36m: return 15;
    case SkeletonId::mocap_umpm: return 15;
    case SkeletonId::tdpw: return 13;
    case SkeletonId::traj_point: return 1;
    case SkeletonId::synth: return 0;
  }
  return 0;
}

// ---- canonical skeleton ---------------------------------------------------

const std::array<const char*, 22> kCanonicalJointNames = {
    "Pelvis", "L_Hip",    "R_Hip",    "Spine1",     "L_Knee",     "R_Knee",  "Spine2",  "L_Ankle",
    "R_Ankle", "Spine3",  "L_Foot",   "R_Foot",     "Neck",       "L_Collar", "R_Collar", "Head",
    "L_Shoulder", "R_Shoulder", "L_Elbow", "R_Elbow", "L_Wrist",  "R_Wrist"};

std::size_t canonical_index(const std::string& joint_name) {
  for (std::size_t i = 0; i < kCanonicalJointNames.size(); ++i) {
    if (joint_name == kCanonicalJointNames[i]) return i;
  }
  throw ConfigError("unknown canonical joint name \"" + joint_name + "\"");
}

namespace {

SkeletonMapping build_canonical22_map() {
  SkeletonMapping m;
  for (std::size_t i = 0; i < kCanonicalJointNames.size(); ++i) {
    m.joints.emplace_back(kCanonicalJointNames[i], i);
  }
  return m;
}

SkeletonMapping build_human36m_map() {
  SkeletonMapping m;
  m.joints = {{"LeftUpLeg", 1},   {"RightUpLeg", 2},  {"Spine", 3},        {"LeftLeg", 4},
              {"RightLeg", 5},    {"LeftFoot", 7},    {"RightFoot", 8},    {"Neck", 12},
              {"Head", 15},       {"LeftArm", 16},    {"RightArm", 17},    {"LeftForeArm", 18},
              {"RightForeArm", 19}, {"LeftHand", 20}, {"RightHand", 21}};
  m.aliases = {{"Head-top", 15}};
  return m;
}

SkeletonMapping build_mocap_umpm_map() {
  SkeletonMapping m;
  m.joints = {{"Hips", 0},      {"LHip", 1},      {"RHip", 2},    {"Spine", 3},
              {"LKnee", 4},     {"RKnee", 5},     {"LAnkle", 7},  {"RAnkle", 8},
              {"Neck", 12},     {"Head", 15},     {"LShoulder", 16}, {"RShoulder", 17},
              {"LElbow", 18},   {"RElbow", 19},   {"LWrist", 20}};
  return m;
}

SkeletonMapping build_tdpw_map() {
  SkeletonMapping m;
  m.joints = {{"Pelvis", 0},     {"LHip", 1},       {"RHip", 2},    {"LKnee", 4},
              {"RKnee", 5},      {"LFoot", 10},     {"RFoot", 11},  {"LShoulder", 16},
              {"RShoulder", 17}, {"LElbow", 18},    {"RElbow", 19}, {"LWrist", 20},
              {"RWrist", 21}};
  return m;
}

SkeletonMapping build_traj_point_map() {
  SkeletonMapping m;
  m.joints = {{"Pelvis", 0}};
  return m;
}

}  // namespace

const SkeletonMapping& source_mapping(SkeletonId s) {
  static const SkeletonMapping canonical22 = build_canonical22_map();
  static const SkeletonMapping human36m = build_human36m_map();
  static const SkeletonMapping mocap_umpm = build_mocap_umpm_map();
  static const SkeletonMapping tdpw = build_tdpw_map();
  static const SkeletonMapping traj_point = build_traj_point_map();
  switch (s) {
    case SkeletonId::canonical22: return canonical22;
    case SkeletonId::human36m: return human36m;
    case SkeletonId::mocap_umpm: return mocap_umpm;
    case SkeletonId::tdpw: return tdpw;
    case SkeletonId::traj_point: return traj_point;
    case SkeletonId::synth: break;
  }
  throw ConfigError(std::string("skeleton \"") + to_string(s) + "\" has no canonical mapping");
}

// ---- validation -----------------------------------------------------------

void validate_sequence(const MotionSequence& seq) {
  if (seq.frame_count() < 2) {
    throw DataError("sequence " + seq.dataset_id + "/" + seq.agent_id + ": needs at least 2 frames, has " +
                    std::to_string(seq.frame_count()));
  }
  std::size_t m = seq.joint_count();
  if (m == 0) throw DataError("sequence " + seq.dataset_id + "/" + seq.agent_id + ": no joints");
  std::size_t want = skeleton_joint_count(seq.skeleton_id);
  if (want != 0 && m != want) {
    throw DataError("sequence " + seq.dataset_id + "/" + seq.agent_id + ": skeleton " +
                    to_string(seq.skeleton_id) + " requires " + std::to_string(want) +
                    " joints, record has " + std::to_string(m));
  }
  if (seq.root_joint_index >= m) {
    throw DataError("sequence " + seq.dataset_id + "/" + seq.agent_id + ": root_joint_index " +
                    std::to_string(seq.root_joint_index) + " out of range for " +
                    std::to_string(m) + " joints");
  }
  if (!(seq.fps > 0.0) || !std::isfinite(seq.fps)) {
    throw DataError("sequence " + seq.dataset_id + "/" + seq.agent_id + ": fps must be positive");
  }
  for (std::size_t t = 0; t < seq.frames.size(); ++t) {
    if (seq.frames[t].size() != m) {
      throw DataError("sequence " + seq.dataset_id + "/" + seq.agent_id + ": frame " +
                      std::to_string(t) + " has " + std::to_string(seq.frames[t].size()) +
                      " joints, expected " + std::to_string(m));
    }
    for (const auto& p : seq.frames[t]) {
      for (double c : p) {
        if (!std::isfinite(c)) {
          throw DataError("sequence " + seq.dataset_id + "/" + seq.agent_id +
                          ": non-finite coordinate at frame " + std::to_string(t));
        }
      }
    }
  }
}

// ---- canonical mapping ----------------------------------------------------

CanonicalMapResult map_to_canonical(const MotionSequence& seq, const SkeletonMapping& table) {
  validate_sequence(seq);
  if (seq.joint_count() != table.joints.size()) {
    throw DataError("canonical mapping: table lists " + std::to_string(table.joints.size()) +
                    " joints but sequence has " + std::to_string(seq.joint_count()));
  }
  std::vector<std::uint8_t> seen(22, 0);
  for (const auto& [name, slot] : table.joints) {
    if (slot >= 22) throw DataError("canonical mapping: slot out of range for \"" + name + "\"");
    if (seen[slot]) {
      throw DataError("canonical mapping: slot " + std::to_string(slot) +
                      " mapped twice (\"" + name + "\")");
    }
    seen[slot] = 1;
  }

  CanonicalMapResult out;
  out.valid = seen;
  out.sequence = seq;
  out.sequence.skeleton_id = SkeletonId::canonical22;
  out.sequence.root_joint_index = table.joints[seq.root_joint_index].second;
  out.sequence.frames.assign(seq.frame_count(),
                             std::vector<std::array<double, 3>>(22, {0.0, 0.0, 0.0}));
  for (std::size_t t = 0; t < seq.frame_count(); ++t) {
    for (std::size_t j = 0; j < table.joints.size(); ++j) {
      out.sequence.frames[t][table.joints[j].second] = seq.frames[t][j];
    }
  }
  return out;
}

CanonicalMapResult map_to_canonical(const MotionSequence& seq) {
  return map_to_canonical(seq, source_mapping(seq.skeleton_id));
}

// ---- normalization --------------------------------------------------------

std::size_t NormalizedSample::past_frames() const {
  if (T_past.defined()) return T_past.shape()[0];
  if (P_past.defined()) return P_past.shape()[0];
  return 0;
}

std::size_t NormalizedSample::future_frames() const {
  if (gt_traj.defined()) return gt_traj.shape()[0];
  if (gt_pose.defined()) return gt_pose.shape()[0];
  return 0;
}

NormalizedSample normalize(const MotionSequence& seq, std::size_t H, std::size_t F,
                           const std::vector<std::uint8_t>& joint_valid) {
  if (H < 1 || F < 1) {
    throw ConfigError("normalize: horizons must be positive, got H=" + std::to_string(H) +
                      " F=" + std::to_string(F));
  }
  std::size_t T = seq.frame_count(), M = seq.joint_count();
  if (T < H + F) {
    throw DataError("normalize: sequence " + seq.dataset_id + "/" + seq.agent_id + " has T=" +
                    std::to_string(T) + " frames, need H+F=" + std::to_string(H) + "+" +
                    std::to_string(F) + "=" + std::to_string(H + F));
  }
  std::vector<std::uint8_t> valid = joint_valid;
  if (valid.empty()) valid.assign(M, 1);
  if (valid.size() != M) {
    throw DataError("normalize: validity mask has " + std::to_string(valid.size()) +
                    " entries for " + std::to_string(M) + " joints");
  }
  std::size_t root = seq.root_joint_index;
  if (!valid[root]) {
    throw DataError("normalize: root joint " + std::to_string(root) + " is masked invalid");
  }

  NormalizedSample s;
  s.task = seq.task_mode;
  s.root_index = root;
  s.joint_valid = valid;
  const auto& anchor_pos = seq.frames[H - 1][root];
  s.anchor = anchor_pos;

  if (task_has_traj(seq.task_mode)) {
    std::vector<double> tp(H * 3), gt(F * 3);
    for (std::size_t t = 0; t < H; ++t) {
      for (std::size_t c = 0; c < 3; ++c) tp[t * 3 + c] = seq.frames[t][root][c] - anchor_pos[c];
    }
    for (std::size_t t = 0; t < F; ++t) {
      for (std::size_t c = 0; c < 3; ++c) {
        gt[t * 3 + c] = seq.frames[H + t][root][c] - anchor_pos[c];
      }
    }
    s.T_past = Tensor::from_data({H, 3}, std::move(tp));
    s.gt_traj = Tensor::from_data({F, 3}, std::move(gt));
  }
  if (task_has_pose(seq.task_mode)) {
    std::vector<double> pp(H * M * 3, 0.0), gp(F * M * 3, 0.0);
    for (std::size_t t = 0; t < H; ++t) {
      const auto& rootpos = seq.frames[t][root];
      for (std::size_t m = 0; m < M; ++m) {
        if (!valid[m]) continue;
        for (std::size_t c = 0; c < 3; ++c) {
          pp[(t * M + m) * 3 + c] = seq.frames[t][m][c] - rootpos[c];
        }
      }
    }
    for (std::size_t t = 0; t < F; ++t) {
      const auto& rootpos = seq.frames[H + t][root];
      for (std::size_t m = 0; m < M; ++m) {
        if (!valid[m]) continue;
        for (std::size_t c = 0; c < 3; ++c) {
          gp[(t * M + m) * 3 + c] = seq.frames[H + t][m][c] - rootpos[c];
        }
      }
    }
    s.P_past = Tensor::from_data({H, M, 3}, std::move(pp));
    s.gt_pose = Tensor::from_data({F, M, 3}, std::move(gp));
  }
  return s;
}

NormalizedSample normalize(const MotionSequence& seq, std::size_t H, std::size_t F) {
  return normalize(seq, H, F, {});
}

ProposalSet denormalize(const ProposalSet& proposals, const std::array<double, 3>& anchor) {
  ProposalSet out = proposals;
  if (proposals.has_traj()) {
    std::vector<double> v = proposals.traj.data();
    for (std::size_t i = 0; i < v.size(); i += 3) {
      v[i] += anchor[0];
      v[i + 1] += anchor[1];
      v[i + 2] += anchor[2];
    }
    out.traj = Tensor::from_data(proposals.traj.shape(), std::move(v));
  }
  return out;
}

Tensor world_pose_export(const ProposalSet& proposals) {
  if (!proposals.has_traj() || !proposals.has_pose()) {
    throw ShapeError("world pose export needs both trajectory and pose streams");
  }
  const Shape& ps = proposals.pose.shape();
  std::size_t K = ps[0], F = ps[1], M = ps[2];
  const auto& tv = proposals.traj.data();
  std::vector<double> out = proposals.pose.data();
  for (std::size_t k = 0; k < K; ++k) {
    for (std::size_t f = 0; f < F; ++f) {
      const double* root = tv.data() + (k * F + f) * 3;
      for (std::size_t m = 0; m < M; ++m) {
        double* joint = out.data() + ((k * F + f) * M + m) * 3;
        joint[0] += root[0];
        joint[1] += root[1];
        joint[2] += root[2];
      }
    }
  }
  return Tensor::from_data(ps, std::move(out));
}

std::vector<std::array<double, 3>> pad_2d_to_3d(const std::vector<std::array<double, 2>>& points) {
  std::vector<std::array<double, 3>> out;
  out.reserve(points.size());
  for (const auto& p : points) out.push_back({p[0], p[1], 0.0});
  return out;
}

// ---- synthetic data -------------------------------------------------------

const char* to_string(SynthScenario s) {
  switch (s) {
    case SynthScenario::const_velocity: return "const_velocity";
    case SynthScenario::sine_gait_walker: return "sine_gait_walker";
    case SynthScenario::fork_turn: return "fork_turn";
  }
  return "?";
}

SynthScenario scenario_from_string(const std::string& s) {
  if (s == "const_velocity") return SynthScenario::const_velocity;
  if (s == "sine_gait_walker") return SynthScenario::sine_gait_walker;
  if (s == "fork_turn") return SynthScenario::fork_turn;
  throw ConfigError("scenario: unknown value \"" + s +
                    "\" (expected const_velocity, sine_gait_walker, or fork_turn)");
}

std::vector<MotionSequence> synth_generate(SynthScenario scenario, std::size_t count,
                                           std::size_t T, std::size_t M, std::uint64_t seed,
                                           std::optional<std::size_t> turn_frame) {
  if (count < 1) throw ConfigError("count must be >= 1");
  if (T < 2) throw ConfigError("T must be >= 2, got " + std::to_string(T));
  if (M < 1) throw ConfigError("M must be >= 1, got " + std::to_string(M));
  std::size_t turn_at = turn_frame.value_or(T / 2);
  if (scenario == SynthScenario::fork_turn && (turn_at < 1 || turn_at >= T)) {
    throw ConfigError("turn_frame " + std::to_string(turn_at) + " outside [1, T)");
  }

  std::vector<MotionSequence> out;
  out.reserve(count);
  for (std::size_t idx = 0; idx < count; ++idx) {
    auto rng = record_rng(seed, idx);
    MotionSequence seq;
    seq.dataset_id = to_string(scenario);
    seq.agent_id = "a" + std::to_string(idx);
    seq.fps = 25.0;
    seq.root_joint_index = 0;
    seq.skeleton_id = (M == 1) ? SkeletonId::traj_point : SkeletonId::synth;
    seq.task_mode = (M == 1) ? TaskMode::traj_only : TaskMode::joint;

    double heading = uniform(rng, 0.0, 2.0 * kPi);
    double speed = uniform(rng, 0.04, 0.12);  // meters per frame
    std::array<double, 2> pos = {uniform(rng, -5.0, 5.0), uniform(rng, -5.0, 5.0)};
    bool turn_left = (rng() & 1u) != 0;

    // Per-joint offsets from the root; the root itself rides the trajectory.
    std::vector<std::array<double, 3>> base(M, {0.0, 0.0, 0.0});
    std::vector<std::array<double, 3>> amp(M, {0.0, 0.0, 0.0});
    std::vector<double> phase(M, 0.0);
    for (std::size_t m = 1; m < M; ++m) {
      base[m] = {uniform(rng, -0.5, 0.5), uniform(rng, -0.5, 0.5), uniform(rng, 0.2, 1.7)};
      amp[m] = {uniform(rng, -0.2, 0.2), uniform(rng, -0.2, 0.2), uniform(rng, -0.1, 0.1)};
      phase[m] = uniform(rng, 0.0, 2.0 * kPi);
    }
    double gait_hz = uniform(rng, 0.6, 1.6);

    seq.frames.assign(T, std::vector<std::array<double, 3>>(M, {0.0, 0.0, 0.0}));
    for (std::size_t t = 0; t < T; ++t) {
      if (t > 0) {
        double h = heading;
        if (scenario == SynthScenario::fork_turn && t >= turn_at) {
          h += (turn_left ? 1.0 : -1.0) * kPi / 4.0;
        }
        pos[0] += speed * std::cos(h);
        pos[1] += speed * std::sin(h);
      }
      seq.frames[t][0] = {pos[0], pos[1], 0.0};
      for (std::size_t m = 1; m < M; ++m) {
        std::array<double, 3> off = base[m];
        if (scenario == SynthScenario::sine_gait_walker) {
          double s = std::sin(2.0 * kPi * gait_hz * static_cast<double>(t) / seq.fps + phase[m]);
          off[0] += amp[m][0] * s;
          off[1] += amp[m][1] * s;
          off[2] += amp[m][2] * s;
        }
        seq.frames[t][m] = {pos[0] + off[0], pos[1] + off[1], off[2]};
      }
    }
    out.push_back(std::move(seq));
  }
  return out;
}

// ---- batching -------------------------------------------------------------

BatchScheduler::BatchScheduler(std::vector<std::pair<std::string, std::size_t>> dataset_sizes,
                               std::size_t batch_size, std::uint64_t seed)
    : batch_size_(batch_size), rng_(seed) {
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (dataset_sizes.empty()) throw ConfigError("balanced batching needs at least one dataset");
  batches_per_dataset_ = std::size_t(-1);
  for (auto& [id, size] : dataset_sizes) {
    if (size < batch_size) {
      throw ConfigError("dataset \"" + id + "\" has " + std::to_string(size) +
                        " samples, smaller than batch_size " + std::to_string(batch_size));
    }
    batches_per_dataset_ = std::min(batches_per_dataset_, size / batch_size);
    Pool p;
    p.id = id;
    p.order.resize(size);
    for (std::size_t i = 0; i < size; ++i) p.order[i] = i;
    p.pos = size;  // force a reshuffle on first draw
    pools_.push_back(std::move(p));
  }
}

std::vector<Batch> BatchScheduler::next_epoch() {
  std::vector<std::size_t> slots;
  slots.reserve(pools_.size() * batches_per_dataset_);
  for (std::size_t d = 0; d < pools_.size(); ++d) {
    for (std::size_t b = 0; b < batches_per_dataset_; ++b) slots.push_back(d);
  }
  seeded_shuffle(slots, rng_);

  std::vector<Batch> epoch;
  epoch.reserve(slots.size());
  for (std::size_t d : slots) {
    Pool& p = pools_[d];
    if (p.pos + batch_size_ > p.order.size()) {
      // New pass: reshuffle, dropping whatever remainder the old pass left.
      seeded_shuffle(p.order, rng_);
      p.pos = 0;
    }
    Batch b;
    b.dataset_id = p.id;
    b.indices.assign(p.order.begin() + p.pos, p.order.begin() + p.pos + batch_size_);
    p.pos += batch_size_;
    epoch.push_back(std::move(b));
  }
  return epoch;
}

std::vector<Batch> balanced_batches(
    const std::vector<std::pair<std::string, std::size_t>>& dataset_sizes,
    std::size_t batch_size, std::uint64_t seed) {
  BatchScheduler sched(dataset_sizes, batch_size, seed);
  return sched.next_epoch();
}

// ---- file I/O -------------------------------------------------------------

namespace {

MotionSequence sequence_from_json(const json& j) {
  MotionSequence seq;
  auto need = [&](const char* key) -> const json& {
    auto it = j.find(key);
    if (it == j.end()) throw DataError(std::string("missing key \"") + key + "\"");
    return *it;
  };
  if (!j.is_object()) throw DataError("record is not a JSON object");
  seq.dataset_id = need("dataset_id").get<std::string>();
  seq.agent_id = need("agent_id").get<std::string>();
  seq.fps = need("fps").get<double>();
  seq.skeleton_id = skeleton_from_string(need("skeleton_id").get<std::string>());
  seq.task_mode = task_mode_from_string(need("task_mode").get<std::string>());
  const json& root = need("root_joint_index");
  if (!root.is_number_unsigned()) throw DataError("root_joint_index must be a non-negative integer");
  seq.root_joint_index = root.get<std::size_t>();
  const json& frames = need("frames");
  if (!frames.is_array()) throw DataError("frames must be an array");
  seq.frames.reserve(frames.size());
  for (const auto& frame : frames) {
    if (!frame.is_array()) throw DataError("frame must be an array of joints");
    std::vector<std::array<double, 3>> joints;
    joints.reserve(frame.size());
    for (const auto& joint : frame) {
      if (!joint.is_array() || joint.size() != 3) {
        throw DataError("joint must be an [x,y,z] triple");
      }
      joints.push_back({joint[0].get<double>(), joint[1].get<double>(), joint[2].get<double>()});
    }
    seq.frames.push_back(std::move(joints));
  }
  validate_sequence(seq);
  return seq;
}

ordered_json sequence_to_json(const MotionSequence& seq) {
  ordered_json j;
  j["dataset_id"] = seq.dataset_id;
  j["agent_id"] = seq.agent_id;
  j["fps"] = seq.fps;
  j["skeleton_id"] = to_string(seq.skeleton_id);
  j["task_mode"] = to_string(seq.task_mode);
  j["root_joint_index"] = seq.root_joint_index;
  ordered_json frames = ordered_json::array();
  for (const auto& frame : seq.frames) {
    ordered_json fj = ordered_json::array();
    for (const auto& joint : frame) fj.push_back({joint[0], joint[1], joint[2]});
    frames.push_back(std::move(fj));
  }
  j["frames"] = std::move(frames);
  return j;
}

}  // namespace

std::vector<MotionSequence> read_sequences(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open sequence file \"" + path + "\"");
  std::vector<MotionSequence> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      out.push_back(sequence_from_json(json::parse(line)));
    } catch (const json::exception& e) {
      throw DataError(path + ":" + std::to_string(lineno) + ": " + e.what());
    } catch (const DataError& e) {
      throw DataError(path + ":" + std::to_string(lineno) + ": " + e.what());
    } catch (const ConfigError& e) {
      throw DataError(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

void write_sequences(const std::string& path, const std::vector<MotionSequence>& seqs) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot open \"" + path + "\" for writing");
  for (const auto& seq : seqs) {
    validate_sequence(seq);
    out << sequence_to_json(seq).dump() << "\n";
  }
  if (!out) throw DataError("write to \"" + path + "\" failed");
}

// ---- augmentation ---------------------------------------------------------

MotionSequence mirror_sequence(const MotionSequence& seq) {
  MotionSequence out = seq;
  for (auto& frame : out.frames) {
    for (auto& joint : frame) joint[1] = -joint[1];
  }
  if (seq.skeleton_id == SkeletonId::canonical22) {
    // Reflection turns left limbs into right ones; swap the paired slots.
    static const std::pair<std::size_t, std::size_t> pairs[] = {
        {1, 2}, {4, 5}, {7, 8}, {10, 11}, {13, 14}, {16, 17}, {18, 19}, {20, 21}};
    for (auto& frame : out.frames) {
      for (auto [l, r] : pairs) std::swap(frame[l], frame[r]);
    }
    for (auto [l, r] : pairs) {
      if (out.root_joint_index == l) {
        out.root_joint_index = r;
        break;
      }
      if (out.root_joint_index == r) {
        out.root_joint_index = l;
        break;
      }
    }
  }
  return out;
}

MotionSequence yaw_rotate_sequence(const MotionSequence& seq, double angle) {
  MotionSequence out = seq;
  double c = std::cos(angle), s = std::sin(angle);
  for (auto& frame : out.frames) {
    for (auto& joint : frame) {
      double x = joint[0], y = joint[1];
      joint[0] = c * x - s * y;
      joint[1] = s * x + c * y;
    }
  }
  return out;
}

}  // namespace simplihumon
