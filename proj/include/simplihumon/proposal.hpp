#pragma once

#include <cstddef>
#include <optional>

#include "simplihumon/tensor.hpp"

namespace simplihumon {

/// K predicted futures for one input. traj rows live in the normalized frame
/// (anchored to the last observed root position) until denormalized; pose is
/// root-relative in both frames.
struct ProposalSet {
  Tensor traj;  // {K, F, 3} when the trajectory stream is present
  Tensor pose;  // {K, F, M, 3} when the pose stream is present
  std::optional<std::size_t> winner_index;

  bool has_traj() const { return traj.defined(); }
  bool has_pose() const { return pose.defined(); }

  std::size_t branches() const {
    if (has_traj()) return traj.shape()[0];
    if (has_pose()) return pose.shape()[0];
    return 0;
  }
  std::size_t horizon() const {
    if (has_traj()) return traj.shape()[1];
    if (has_pose()) return pose.shape()[1];
    return 0;
  }
};

}  // namespace simplihumon
