#pragma once

#include <vector>

#include "cabledyn/types.hpp"

namespace cabledyn {

struct TrajectorySample {
  JointVec q;  // rad
  JointVec v;  // rad/s
  JointVec a;  // rad/s^2
};

/// Timed joint trajectory sampled at spacing h. Configurations and velocities
/// obey the discrete dynamics q_{t+1} = q_t + h v_t + h^2/2 a_t and
/// v_{t+1} = v_t + h a_t by construction.
struct Trajectory {
  double h = 0.0;
  std::vector<TrajectorySample> samples;  // indices t = 0..H

  int horizon() const { return static_cast<int>(samples.size()) - 1; }
  double duration() const { return horizon() * h; }
};

}  // namespace cabledyn
