#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "simplihumon/motion_data.hpp"

namespace simplihumon {

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;  // worst error, counts, or the first failure
  double seconds = 0.0;
};

/// Lets a test swap in a corrupted mapping table as a negative control;
/// null entries fall back to the library tables.
struct SkeletonTableOverrides {
  const SkeletonMapping* human36m = nullptr;
  const SkeletonMapping* mocap_umpm = nullptr;
  const SkeletonMapping* tdpw = nullptr;
  const SkeletonMapping* traj_point = nullptr;
};

CheckResult check_op_gradients(std::size_t trials = 100, double tol = 1e-4);
CheckResult check_model_gradients(double tol = 1e-4);
CheckResult check_shape_contracts(std::size_t tuples = 50);
CheckResult check_metric_oracles(std::size_t instances = 200, double tol = 1e-12);
CheckResult check_wta_semantics(std::size_t sets = 100);
CheckResult check_normalization(std::size_t cases = 20);
CheckResult check_skeleton_table(const SkeletonTableOverrides& overrides = {});
CheckResult check_balanced_batching();
CheckResult check_positional_encoding();
CheckResult check_optimizer_step();
CheckResult check_determinism();

/// The full battery, fixed order. Total runtime is expected to stay under
/// five minutes on a laptop CPU; callers may warn when it does not.
std::vector<CheckResult> run_verification();

}  // namespace simplihumon
