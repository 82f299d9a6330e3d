#pragma once

#include <map>
#include <optional>
#include <string>

#include "cabledyn/arm.hpp"
#include "cabledyn/qp.hpp"
#include "cabledyn/trajectory.hpp"
#include "cabledyn/types.hpp"

namespace cabledyn::minjerk {

/// Policy action space: base, shoulder, elbow joint angles of the trajectory
/// midpoint.
struct ApexAction {
  Vec3 apex_joints = Vec3::Zero();  // rad
};

/// Per-task presets: fixed start/end configurations and the linear map that
/// ties joints 4-6 to the apex triple (joints 4-6 = wrist_map * apex +
/// wrist_offset).
struct TaskProfile {
  arm::JointConfig start = arm::JointConfig::Zero();
  arm::JointConfig end = arm::JointConfig::Zero();
  Mat3 wrist_map = Mat3::Zero();
  Vec3 wrist_offset = Vec3::Zero();
};

struct TrajectoryRequest {
  arm::JointConfig start = arm::JointConfig::Zero();
  arm::JointConfig end = arm::JointConfig::Zero();
  ApexAction apex;
  Mat3 wrist_map = Mat3::Zero();
  Vec3 wrist_offset = Vec3::Zero();
  double h = 0.008;      // s, integer multiple of the arm control period
  int horizon_init = 250;
  int horizon_min = 2;
  JointVec weights = JointVec::Ones();  // diagonal of the jerk metric

  void validate(const arm::ArmModel& model) const;
};

enum class HorizonSearch {
  Linear,     // decrease H one step at a time until infeasible
  Bisection,  // binary search assuming monotone feasibility, then verify
};

class NoFeasibleTrajectoryError : public Error {
 public:
  NoFeasibleTrajectoryError(const std::string& what, qp::Solution certificate)
      : Error(what), certificate(std::move(certificate)) {}
  qp::Solution certificate;
};

class LimitError : public Error {
 public:
  using Error::Error;
};

/// Full 6-joint apex configuration: joints 1-3 from the action, joints 4-6
/// from the profile's linear map. Throws LimitError outside the joint box.
arm::JointConfig expand_apex(const ApexAction& action,
                             const TrajectoryRequest& request,
                             const arm::ArmModel& model);

/// Assemble the minimum-jerk QP at a fixed horizon H. The decision vector
/// stacks (q_t, v_t, a_t) per time step; see the row layout in the source.
qp::Problem assemble_qp(const TrajectoryRequest& request,
                        const arm::ArmModel& model, int horizon);

/// Per-joint slice of the same QP (the diagonal weight matrix and the
/// one-joint constraint rows make the assembly fully separable). The horizon
/// search solves these six subproblems; solutions concatenate to the full
/// QP's solution.
qp::Problem assemble_joint_qp(const TrajectoryRequest& request,
                              const arm::ArmModel& model, int horizon,
                              int joint);

struct HorizonResult {
  Trajectory trajectory;
  int horizon = 0;                 // H*
  bool shorter_is_infeasible = false;  // verified H*-1 verdict
  int qp_solves = 0;
};

/// Shrink the horizon to the shortest feasible value and return the solved
/// trajectory. MaxIterations verdicts count as infeasible after one retry at
/// a 4x iteration cap.
HorizonResult solve_horizon(const TrajectoryRequest& request,
                            const arm::ArmModel& model,
                            const qp::Settings& solver = {},
                            HorizonSearch mode = HorizonSearch::Linear);

/// Registry of task profiles built from the arm's geometry.
std::map<TaskKind, TaskProfile> default_task_profiles(const arm::ArmModel& model);

/// The parametric trajectory function: the task's preset start/end plus the
/// given apex.
HorizonResult trajectory_function(TaskKind kind, const ApexAction& action,
                                  const arm::ArmModel& model,
                                  const qp::Settings& solver = {},
                                  HorizonSearch mode = HorizonSearch::Linear);

TrajectoryRequest make_request(const TaskProfile& profile,
                               const ApexAction& action,
                               const arm::ArmModel& model);

/// CSV export: t_index, time_s, q1..q6, v1..v6, a1..a6 with a header row.
void write_trajectory_csv(const Trajectory& traj, const std::string& path);

}  // namespace cabledyn::minjerk
