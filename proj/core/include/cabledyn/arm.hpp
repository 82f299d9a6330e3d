#pragma once

#include <array>
#include <string>
#include <vector>

#include "cabledyn/trajectory.hpp"
#include "cabledyn/types.hpp"

namespace cabledyn::arm {

/// Standard DH row: (link length a, link offset d, link twist alpha,
/// joint angle offset).
struct DhRow {
  double link_length = 0.0;
  double link_offset = 0.0;
  double link_twist = 0.0;
  double joint_offset = 0.0;
};

using JointConfig = JointVec;

struct Pose {
  Vec3 position = Vec3::Zero();
  Mat3 orientation = Mat3::Identity();
};

/// 6-DOF serial arm: geometry plus joint-space limit boxes. Poses are
/// expressed in the arm base frame. Immutable after load.
struct ArmModel {
  std::array<DhRow, kNumJoints> dh_rows;
  JointVec q_min, q_max;
  JointVec v_min, v_max;
  JointVec a_min, a_max;
  JointVec j_min, j_max;
  double control_period = 0.008;

  void validate() const;
};

/// Nominal UR5-class parameter set. The geometry and limits are artifact
/// defaults, not manufacturer data; see configs/arm_nominal.json.
ArmModel nominal_arm();

ArmModel arm_from_json_file(const std::string& path);
void arm_to_json_file(const ArmModel& model, const std::string& path);

Pose forward_kinematics(const ArmModel& model, const JointConfig& config);

enum class ElbowBranch { Up, Down };

class OutOfReachError : public Error {
 public:
  OutOfReachError(const std::string& what, double min_reach, double max_reach)
      : Error(what), min_reach(min_reach), max_reach(max_reach) {}
  double min_reach;
  double max_reach;
};

/// Closed-form inverse kinematics for the first three joints: base angle by
/// azimuth, shoulder/elbow by the planar two-link solution, with joints 4-6
/// held at `wrist`. Returns (base, shoulder, elbow). Throws OutOfReachError
/// when the point lies outside the reachable annulus.
Vec3 apex_ik(const ArmModel& model, const Vec3& point,
             ElbowBranch branch = ElbowBranch::Up,
             const Vec3& wrist = Vec3::Zero());

enum class LimitQuantity { Position, Velocity, Acceleration, Jerk };

std::string to_string(LimitQuantity q);

struct LimitViolation {
  int sample_index;
  int joint;
  LimitQuantity quantity;
  double value;
  double bound;
};

struct ViolationReport {
  std::vector<LimitViolation> entries;
  bool empty() const { return entries.empty(); }
};

/// Lists every sample/joint/quantity exceeding its limit box by more than
/// 1e-8 (in the quantity's own units). Jerk is the finite difference of
/// consecutive accelerations divided by h.
ViolationReport within_limits(const ArmModel& model, const Trajectory& traj);

}  // namespace cabledyn::arm
