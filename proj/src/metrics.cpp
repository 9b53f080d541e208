#include "simplihumon/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <json.hpp>

namespace simplihumon {

namespace {

struct MetricView {
  const std::vector<double>* data;
  std::size_t F, M;
};

MetricView view(const char* op, const Tensor& t) {
  const Shape& s = t.shape();
  if (s.size() == 2 && s[1] == 3) return {&t.data(), s[0], 1};
  if (s.size() == 3 && s[2] == 3) return {&t.data(), s[0], s[1]};
  throw ShapeError(std::string(op) + ": expected {F,3} or {F,M,3}, got " + shape_str(s));
}

void check_pair(const char* op, const MetricView& a, const MetricView& b,
                const std::vector<std::uint8_t>& valid) {
  if (a.F != b.F || a.M != b.M) {
    throw ShapeError(std::string(op) + ": mismatched horizons or joint counts");
  }
  if (!valid.empty() && valid.size() != a.M) {
    throw ShapeError(std::string(op) + ": validity mask has " + std::to_string(valid.size()) +
                     " entries for " + std::to_string(a.M) + " joints");
  }
}

inline bool joint_ok(const std::vector<std::uint8_t>& valid, std::size_t m) {
  return valid.empty() || valid[m];
}

inline double dist3(const double* a, const double* b) {
  double dx = a[0] - b[0], dy = a[1] - b[1], dz = a[2] - b[2];
  return std::sqrt(dx * dx + dy * dy + dz * dz);
}

}  // namespace

double ade(const Tensor& gt, const Tensor& pred, const std::vector<std::uint8_t>& valid) {
  auto g = view("ade", gt), p = view("ade", pred);
  check_pair("ade", g, p, valid);
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t t = 0; t < g.F; ++t) {
    for (std::size_t m = 0; m < g.M; ++m) {
      if (!joint_ok(valid, m)) continue;
      sum += dist3(g.data->data() + (t * g.M + m) * 3, p.data->data() + (t * g.M + m) * 3);
      ++n;
    }
  }
  if (n == 0) throw ShapeError("ade: no valid joints");
  return sum / static_cast<double>(n);
}

double fde(const Tensor& gt, const Tensor& pred, std::size_t t,
           const std::vector<std::uint8_t>& valid) {
  auto g = view("fde", gt), p = view("fde", pred);
  check_pair("fde", g, p, valid);
  if (t >= g.F) {
    throw ShapeError("fde: timestep " + std::to_string(t) + " outside horizon " +
                     std::to_string(g.F));
  }
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t m = 0; m < g.M; ++m) {
    if (!joint_ok(valid, m)) continue;
    sum += dist3(g.data->data() + (t * g.M + m) * 3, p.data->data() + (t * g.M + m) * 3);
    ++n;
  }
  if (n == 0) throw ShapeError("fde: no valid joints");
  return sum / static_cast<double>(n);
}

double ape(const Tensor& gt, const Tensor& pred, std::size_t t, std::size_t root_index,
           const std::vector<std::uint8_t>& valid) {
  auto g = view("ape", gt), p = view("ape", pred);
  check_pair("ape", g, p, valid);
  if (t >= g.F) {
    throw ShapeError("ape: timestep " + std::to_string(t) + " outside horizon " +
                     std::to_string(g.F));
  }
  if (root_index >= g.M) {
    throw ShapeError("ape: root index " + std::to_string(root_index) + " outside " +
                     std::to_string(g.M) + " joints");
  }
  const double* groot = g.data->data() + (t * g.M + root_index) * 3;
  const double* proot = p.data->data() + (t * g.M + root_index) * 3;
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t m = 0; m < g.M; ++m) {
    if (!joint_ok(valid, m)) continue;
    const double* gj = g.data->data() + (t * g.M + m) * 3;
    const double* pj = p.data->data() + (t * g.M + m) * 3;
    double dx = (gj[0] - groot[0]) - (pj[0] - proot[0]);
    double dy = (gj[1] - groot[1]) - (pj[1] - proot[1]);
    double dz = (gj[2] - groot[2]) - (pj[2] - proot[2]);
    sum += std::sqrt(dx * dx + dy * dy + dz * dz);
    ++n;
  }
  if (n == 0) throw ShapeError("ape: no valid joints");
  return sum / static_cast<double>(n);
}

double jpe(const Tensor& gt, const Tensor& pred, std::size_t t,
           const std::vector<std::uint8_t>& valid) {
  auto g = view("jpe", gt), p = view("jpe", pred);
  check_pair("jpe", g, p, valid);
  if (t >= g.F) {
    throw ShapeError("jpe: timestep " + std::to_string(t) + " outside horizon " +
                     std::to_string(g.F));
  }
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t m = 0; m < g.M; ++m) {
    if (!joint_ok(valid, m)) continue;
    sum += dist3(g.data->data() + (t * g.M + m) * 3, p.data->data() + (t * g.M + m) * 3);
    ++n;
  }
  if (n == 0) throw ShapeError("jpe: no valid joints");
  return sum / static_cast<double>(n);
}

double min_over_k(const BranchMetric& metric, const Tensor& gt, const Tensor& branches) {
  const Shape& bs = branches.shape();
  if (bs.empty()) throw ShapeError("min_over_k: branch tensor undefined");
  std::size_t K = bs[0];
  Shape single(bs.begin() + 1, bs.end());
  double best = 0.0;
  for (std::size_t k = 0; k < K; ++k) {
    Tensor branch = reshape(slice(branches, 0, k, 1), single);
    double v = metric(gt, branch);
    if (k == 0 || v < best) best = v;
  }
  return best;
}

ModeUtilization mode_utilization(const std::vector<std::size_t>& winners, std::size_t K) {
  if (K == 0) throw ShapeError("mode_utilization: K must be positive");
  ModeUtilization u;
  u.histogram.assign(K, 0);
  for (std::size_t w : winners) {
    if (w >= K) {
      throw ShapeError("mode_utilization: winner index " + std::to_string(w) +
                       " outside K=" + std::to_string(K));
    }
    ++u.histogram[w];
  }
  if (!winners.empty()) {
    u.max_share = static_cast<double>(*std::max_element(u.histogram.begin(), u.histogram.end())) /
                  static_cast<double>(winners.size());
  }
  return u;
}

// ---- winner-takes-all -----------------------------------------------------

namespace {

Tensor flat_branch(const Tensor& branches, std::size_t k) {
  Shape s = branches.shape();
  std::size_t rest = 1;
  for (std::size_t d = 1; d < s.size(); ++d) rest *= s[d];
  return reshape(slice(branches, 0, k, 1), {rest});
}

}  // namespace

WtaResult wta_loss(const NormalizedSample& gt, const ProposalSet& proposals,
                   const WtaWeights& weights) {
  if (!proposals.has_traj() && !proposals.has_pose()) {
    throw ShapeError("wta: proposal set has no streams");
  }
  if (proposals.has_traj() != gt.gt_traj.defined() ||
      proposals.has_pose() != gt.gt_pose.defined()) {
    throw ShapeError("wta: proposal streams do not match ground-truth streams");
  }
  std::size_t K = proposals.branches();
  if (K == 0) throw ShapeError("wta: no branches");

  Tensor gt_traj_flat, gt_pose_flat, mask;
  if (proposals.has_traj()) {
    if (proposals.traj.shape() != Shape{K, gt.gt_traj.shape()[0], 3}) {
      throw ShapeError("wta: trajectory shape " + shape_str(proposals.traj.shape()) +
                       " does not match ground truth " + shape_str(gt.gt_traj.shape()));
    }
    gt_traj_flat = reshape(gt.gt_traj, {gt.gt_traj.numel()});
  }
  if (proposals.has_pose()) {
    const Shape& gs = gt.gt_pose.shape();
    if (proposals.pose.shape() != Shape{K, gs[0], gs[1], gs[2]}) {
      throw ShapeError("wta: pose shape " + shape_str(proposals.pose.shape()) +
                       " does not match ground truth " + shape_str(gt.gt_pose.shape()));
    }
    gt_pose_flat = reshape(gt.gt_pose, {gt.gt_pose.numel()});
    bool any_masked = false;
    for (auto v : gt.joint_valid) any_masked = any_masked || !v;
    if (any_masked) {
      std::size_t F = gs[0], M = gs[1];
      std::vector<double> mv(F * M * 3, 1.0);
      for (std::size_t t = 0; t < F; ++t) {
        for (std::size_t m = 0; m < M; ++m) {
          if (!gt.joint_valid[m]) {
            for (std::size_t c = 0; c < 3; ++c) mv[(t * M + m) * 3 + c] = 0.0;
          }
        }
      }
      mask = Tensor::from_data({F * M * 3}, std::move(mv));
    }
  }

  std::vector<Tensor> branch_losses;
  branch_losses.reserve(K);
  for (std::size_t k = 0; k < K; ++k) {
    std::vector<Tensor> parts;
    if (proposals.has_traj()) {
      Tensor d = sub(flat_branch(proposals.traj, k), gt_traj_flat);
      if (weights.traj != 1.0) d = scale(d, weights.traj);
      parts.push_back(d);
    }
    if (proposals.has_pose()) {
      Tensor d = sub(flat_branch(proposals.pose, k), gt_pose_flat);
      if (mask.defined()) d = mul(d, mask);
      if (weights.pose != 1.0) d = scale(d, weights.pose);
      parts.push_back(d);
    }
    Tensor flat = parts.size() == 1 ? parts[0] : concat(parts, 0);
    branch_losses.push_back(sqrt_elem(sum_all(square(flat))));
  }

  WtaResult res;
  res.winner = 0;
  double best = branch_losses[0].item();
  for (std::size_t k = 1; k < K; ++k) {
    double v = branch_losses[k].item();
    if (v < best) {
      best = v;
      res.winner = k;
    }
  }
  res.loss = branch_losses[res.winner];
  return res;
}

// ---- reporting ------------------------------------------------------------

std::string report_to_json(const MetricReport& r) {
  nlohmann::ordered_json j;
  j["schema_version"] = 1;
  j["units"] = "meters";
  j["min_ade"] = r.min_ade;
  auto map_json = [](const std::map<std::size_t, double>& m) {
    nlohmann::ordered_json o = nlohmann::ordered_json::object();
    for (const auto& [t, v] : m) o[std::to_string(t)] = v;
    return o;
  };
  j["min_fde_at"] = map_json(r.min_fde_at);
  j["min_ape_at"] = map_json(r.min_ape_at);
  j["min_jpe_at"] = map_json(r.min_jpe_at);
  j["winner_histogram"] = r.winner_histogram;
  j["n_samples"] = r.n_samples;
  j["n_agents"] = r.n_agents;
  return j.dump(2) + "\n";
}

std::string report_summary_line(const MetricReport& r) {
  std::ostringstream os;
  os.precision(4);
  os << "min_ade " << r.min_ade;
  for (const auto& [t, v] : r.min_fde_at) os << "  fde@" << t << " " << v;
  for (const auto& [t, v] : r.min_ape_at) os << "  ape@" << t << " " << v * 1000.0 << "mm";
  for (const auto& [t, v] : r.min_jpe_at) os << "  jpe@" << t << " " << v * 1000.0 << "mm";
  if (!r.winner_histogram.empty() && r.n_samples > 0) {
    std::size_t top = *std::max_element(r.winner_histogram.begin(), r.winner_histogram.end());
    os << "  max_share " << static_cast<double>(top) / static_cast<double>(r.n_samples);
  }
  os << "  (" << r.n_samples << " samples, " << r.n_agents << " agents)";
  return os.str();
}

}  // namespace simplihumon
