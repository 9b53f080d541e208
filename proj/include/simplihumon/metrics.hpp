#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "simplihumon/motion_data.hpp"
#include "simplihumon/proposal.hpp"
#include "simplihumon/tensor.hpp"

namespace simplihumon {

// Displacement metrics over a future window. gt/pred are {F, M, 3} (or
// {F, 3}, treated as a single joint). An empty validity mask means all
// joints count; masked-out joints are excluded from the mean and its
// denominator. Values are meters.

double ade(const Tensor& gt, const Tensor& pred, const std::vector<std::uint8_t>& valid = {});
double fde(const Tensor& gt, const Tensor& pred, std::size_t t,
           const std::vector<std::uint8_t>& valid = {});
/// Root-aligned error: both gt and pred joints are expressed relative to
/// their own root before comparison, cancelling any common translation.
double ape(const Tensor& gt, const Tensor& pred, std::size_t t, std::size_t root_index,
           const std::vector<std::uint8_t>& valid = {});
/// World-coordinate per-joint error at one timestep.
double jpe(const Tensor& gt, const Tensor& pred, std::size_t t,
           const std::vector<std::uint8_t>& valid = {});

using BranchMetric = std::function<double(const Tensor& gt, const Tensor& pred)>;

/// Minimum of the single-branch metric over the leading K axis of branches.
double min_over_k(const BranchMetric& metric, const Tensor& gt, const Tensor& branches);

struct ModeUtilization {
  std::vector<std::size_t> histogram;
  double max_share = 0.0;
};

ModeUtilization mode_utilization(const std::vector<std::size_t>& winners, std::size_t K);

struct WtaWeights {
  double traj = 1.0;
  double pose = 1.0;
};

struct WtaResult {
  Tensor loss;             // the winning branch's distance; gradients flow only through it
  std::size_t winner = 0;  // argmin branch, lowest index on ties
};

/// Winner-takes-all distance: per branch, the present streams' residuals are
/// flattened into one vector (trajectory first, each scaled by its stream
/// weight, masked joints zeroed) and reduced by a single Euclidean norm; the
/// branch with the smallest norm is the winner and its norm is the loss.
WtaResult wta_loss(const NormalizedSample& gt, const ProposalSet& proposals,
                   const WtaWeights& weights = {});

struct MetricReport {
  double min_ade = 0.0;
  std::map<std::size_t, double> min_fde_at;  // timestep -> meters
  std::map<std::size_t, double> min_ape_at;
  std::map<std::size_t, double> min_jpe_at;
  std::vector<std::size_t> winner_histogram;
  std::size_t n_samples = 0;
  std::size_t n_agents = 0;
};

/// Stable JSON serialization (values in meters).
std::string report_to_json(const MetricReport& r);
/// One-line console summary; APE/JPE formatted in millimeters.
std::string report_summary_line(const MetricReport& r);

}  // namespace simplihumon
