#include "cabledyn/minjerk.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <vector>

namespace cabledyn::minjerk {

namespace {

// Decision vector layout: per time step t the block (q_t, v_t, a_t), so
// x has 18(H+1) entries.
inline int var_q(int t, int j) { return 18 * t + j; }
inline int var_v(int t, int j) { return 18 * t + 6 + j; }
inline int var_a(int t, int j) { return 18 * t + 12 + j; }

constexpr double kInf = std::numeric_limits<double>::infinity();

}  // namespace

void TrajectoryRequest::validate(const arm::ArmModel& model) const {
  double ratio = h / model.control_period;
  if (!(h > 0) || std::abs(ratio - std::round(ratio)) > 1e-9 ||
      std::round(ratio) < 1)
    throw Error(
        "minjerk: h must be a positive integer multiple of the control period");
  if (!(horizon_init >= horizon_min && horizon_min >= 2))
    throw Error("minjerk: need horizon_init >= horizon_min >= 2");
  for (int j = 0; j < kNumJoints; ++j)
    if (!(weights[j] > 0)) throw Error("minjerk: weights must be positive");
  for (int j = 0; j < kNumJoints; ++j) {
    if (start[j] < model.q_min[j] || start[j] > model.q_max[j] ||
        end[j] < model.q_min[j] || end[j] > model.q_max[j])
      throw LimitError(
          "minjerk: start or end configuration outside joint limits");
  }
}

arm::JointConfig expand_apex(const ApexAction& action,
                             const TrajectoryRequest& request,
                             const arm::ArmModel& model) {
  arm::JointConfig config;
  config.head<3>() = action.apex_joints;
  config.tail<3>() =
      request.wrist_map * action.apex_joints + request.wrist_offset;
  for (int j = 0; j < kNumJoints; ++j)
    if (config[j] < model.q_min[j] || config[j] > model.q_max[j])
      throw LimitError("minjerk: apex configuration outside joint limits");
  return config;
}

qp::Problem assemble_qp(const TrajectoryRequest& request,
                        const arm::ArmModel& model, int horizon) {
  if (horizon < request.horizon_min)
    throw Error("minjerk: horizon below horizon_min");
  const int H = horizon;
  const double h = request.h;
  const int n = 18 * (H + 1);
  const int m = 36 * H + 30;
  const arm::JointConfig apex_cfg = expand_apex(request.apex, request, model);
  const int mid = H / 2;

  qp::Problem prob;
  prob.n = n;
  prob.m = m;
  prob.q = Eigen::VectorXd::Zero(n);

  // Objective: (1/2h) sum_t (a_{t+1}-a_t)' W (a_{t+1}-a_t).
  std::vector<Eigen::Triplet<double>> pt;
  pt.reserve(4 * 6 * H);
  for (int t = 0; t < H; ++t)
    for (int j = 0; j < kNumJoints; ++j) {
      double w = request.weights[j] / h;
      pt.emplace_back(var_a(t, j), var_a(t, j), w);
      pt.emplace_back(var_a(t + 1, j), var_a(t + 1, j), w);
      pt.emplace_back(var_a(t, j), var_a(t + 1, j), -w);
      pt.emplace_back(var_a(t + 1, j), var_a(t, j), -w);
    }
  prob.P.resize(n, n);
  prob.P.setFromTriplets(pt.begin(), pt.end());

  std::vector<Eigen::Triplet<double>> at;
  prob.lower = Eigen::VectorXd::Constant(m, -kInf);
  prob.upper = Eigen::VectorXd::Constant(m, kInf);
  int row = 0;
  auto pin = [&](int var, double value) {
    at.emplace_back(row, var, 1.0);
    prob.lower[row] = value;
    prob.upper[row] = value;
    ++row;
  };
  auto box = [&](int var, double lo, double hi) {
    at.emplace_back(row, var, 1.0);
    prob.lower[row] = lo;
    prob.upper[row] = hi;
    ++row;
  };

  // Fixed start, midpoint, end configurations; zero boundary velocities.
  for (int j = 0; j < kNumJoints; ++j) pin(var_q(0, j), request.start[j]);
  for (int j = 0; j < kNumJoints; ++j) pin(var_q(mid, j), apex_cfg[j]);
  for (int j = 0; j < kNumJoints; ++j) pin(var_q(H, j), request.end[j]);
  for (int j = 0; j < kNumJoints; ++j) pin(var_v(0, j), 0.0);
  for (int j = 0; j < kNumJoints; ++j) pin(var_v(H, j), 0.0);
  // Rest-to-rest boundary accelerations; also what makes the discrete
  // optimum track the classical quintic on the 1-DOF analog.
  for (int j = 0; j < kNumJoints; ++j) pin(var_a(0, j), 0.0);
  for (int j = 0; j < kNumJoints; ++j) pin(var_a(H, j), 0.0);

  // Discrete dynamics between steps.
  for (int t = 0; t < H; ++t)
    for (int j = 0; j < kNumJoints; ++j) {
      at.emplace_back(row, var_q(t + 1, j), 1.0);
      at.emplace_back(row, var_q(t, j), -1.0);
      at.emplace_back(row, var_v(t, j), -h);
      at.emplace_back(row, var_a(t, j), -0.5 * h * h);
      prob.lower[row] = 0.0;
      prob.upper[row] = 0.0;
      ++row;
    }
  for (int t = 0; t < H; ++t)
    for (int j = 0; j < kNumJoints; ++j) {
      at.emplace_back(row, var_v(t + 1, j), 1.0);
      at.emplace_back(row, var_v(t, j), -1.0);
      at.emplace_back(row, var_a(t, j), -h);
      prob.lower[row] = 0.0;
      prob.upper[row] = 0.0;
      ++row;
    }

  // Limit boxes over the index ranges of the discrete formulation.
  for (int t = 1; t < H; ++t)
    for (int j = 0; j < kNumJoints; ++j)
      box(var_q(t, j), model.q_min[j], model.q_max[j]);
  for (int t = 1; t < H; ++t)
    for (int j = 0; j < kNumJoints; ++j)
      box(var_v(t, j), model.v_min[j], model.v_max[j]);
  for (int t = 0; t < H; ++t)
    for (int j = 0; j < kNumJoints; ++j)
      box(var_a(t, j), model.a_min[j], model.a_max[j]);

  // Jerk rows: h*j_min <= a_{t+1} - a_t <= h*j_max.
  for (int t = 0; t < H; ++t)
    for (int j = 0; j < kNumJoints; ++j) {
      at.emplace_back(row, var_a(t + 1, j), 1.0);
      at.emplace_back(row, var_a(t, j), -1.0);
      prob.lower[row] = h * model.j_min[j];
      prob.upper[row] = h * model.j_max[j];
      ++row;
    }

  prob.A.resize(m, n);
  prob.A.setFromTriplets(at.begin(), at.end());
  return prob;
}

namespace {

// The assembled QP is separable across joints: the weight matrix is
// diagonal and every constraint row touches a single joint. The horizon
// search therefore solves six small per-joint QPs; verdicts and solutions
// agree with the full assembly (covered by tests) at a fraction of the
// KKT factorization cost.
inline int jvar_q(int t) { return 3 * t; }
inline int jvar_v(int t) { return 3 * t + 1; }
inline int jvar_a(int t) { return 3 * t + 2; }

qp::Problem assemble_joint_qp_impl(const TrajectoryRequest& request,
                                   const arm::ArmModel& model,
                                   const arm::JointConfig& apex_cfg, int H,
                                   int joint) {
  const double h = request.h;
  const int n = 3 * (H + 1);
  const int m = 6 * H + 5;
  qp::Problem prob;
  prob.n = n;
  prob.m = m;
  prob.q = Eigen::VectorXd::Zero(n);

  std::vector<Eigen::Triplet<double>> pt;
  const double w = request.weights[joint] / h;
  for (int t = 0; t < H; ++t) {
    pt.emplace_back(jvar_a(t), jvar_a(t), w);
    pt.emplace_back(jvar_a(t + 1), jvar_a(t + 1), w);
    pt.emplace_back(jvar_a(t), jvar_a(t + 1), -w);
    pt.emplace_back(jvar_a(t + 1), jvar_a(t), -w);
  }
  prob.P.resize(n, n);
  prob.P.setFromTriplets(pt.begin(), pt.end());

  std::vector<Eigen::Triplet<double>> at;
  prob.lower.resize(m);
  prob.upper.resize(m);
  int row = 0;
  auto pin = [&](int var, double value) {
    at.emplace_back(row, var, 1.0);
    prob.lower[row] = value;
    prob.upper[row] = value;
    ++row;
  };
  pin(jvar_q(0), request.start[joint]);
  pin(jvar_q(H / 2), apex_cfg[joint]);
  pin(jvar_q(H), request.end[joint]);
  pin(jvar_v(0), 0.0);
  pin(jvar_v(H), 0.0);
  pin(jvar_a(0), 0.0);
  pin(jvar_a(H), 0.0);
  for (int t = 0; t < H; ++t) {
    at.emplace_back(row, jvar_q(t + 1), 1.0);
    at.emplace_back(row, jvar_q(t), -1.0);
    at.emplace_back(row, jvar_v(t), -h);
    at.emplace_back(row, jvar_a(t), -0.5 * h * h);
    prob.lower[row] = 0.0;
    prob.upper[row] = 0.0;
    ++row;
  }
  for (int t = 0; t < H; ++t) {
    at.emplace_back(row, jvar_v(t + 1), 1.0);
    at.emplace_back(row, jvar_v(t), -1.0);
    at.emplace_back(row, jvar_a(t), -h);
    prob.lower[row] = 0.0;
    prob.upper[row] = 0.0;
    ++row;
  }
  auto box = [&](int var, double lo, double hi) {
    at.emplace_back(row, var, 1.0);
    prob.lower[row] = lo;
    prob.upper[row] = hi;
    ++row;
  };
  for (int t = 1; t < H; ++t)
    box(jvar_q(t), model.q_min[joint], model.q_max[joint]);
  for (int t = 1; t < H; ++t)
    box(jvar_v(t), model.v_min[joint], model.v_max[joint]);
  for (int t = 0; t < H; ++t)
    box(jvar_a(t), model.a_min[joint], model.a_max[joint]);
  for (int t = 0; t < H; ++t) {
    at.emplace_back(row, jvar_a(t + 1), 1.0);
    at.emplace_back(row, jvar_a(t), -1.0);
    prob.lower[row] = h * model.j_min[joint];
    prob.upper[row] = h * model.j_max[joint];
    ++row;
  }
  prob.A.resize(m, n);
  prob.A.setFromTriplets(at.begin(), at.end());
  return prob;
}

Eigen::VectorXd shrink_joint_primal(const Eigen::VectorXd& x, int from_h,
                                    int to_h) {
  Eigen::VectorXd out(3 * (to_h + 1));
  for (int t = 0; t <= to_h; ++t) {
    double s = from_h * static_cast<double>(t) / static_cast<double>(to_h);
    int t0 = std::min(static_cast<int>(s), from_h - 1);
    double frac = s - t0;
    for (int k = 0; k < 3; ++k)
      out[3 * t + k] =
          (1.0 - frac) * x[3 * t0 + k] + frac * x[3 * (t0 + 1) + k];
  }
  return out;
}

// Remap duals between horizons block by block (nearest time index). Rows per
// joint: 7 pins, q-dyn H, v-dyn H, q-box H-1, v-box H-1, a-box H, jerk H.
Eigen::VectorXd shrink_joint_duals(const Eigen::VectorXd& y, int from_h,
                                   int to_h) {
  Eigen::VectorXd out = Eigen::VectorXd::Zero(6 * to_h + 5);
  out.head(7) = y.head(7);
  const int from_counts[] = {from_h, from_h, from_h - 1, from_h - 1, from_h,
                             from_h};
  const int to_counts[] = {to_h, to_h, to_h - 1, to_h - 1, to_h, to_h};
  int off_from = 7, off_to = 7;
  for (int b = 0; b < 6; ++b) {
    for (int t = 0; t < to_counts[b]; ++t) {
      int src = to_counts[b] > 1
                    ? static_cast<int>(std::round(static_cast<double>(t) *
                                                  (from_counts[b] - 1) /
                                                  (to_counts[b] - 1)))
                    : 0;
      out[off_to + t] = y[off_from + src];
    }
    off_from += from_counts[b];
    off_to += to_counts[b];
  }
  return out;
}

struct JointSolutions {
  std::array<Eigen::VectorXd, kNumJoints> x;
  std::array<Eigen::VectorXd, kNumJoints> y;
};

struct MultiAttempt {
  bool feasible = false;
  JointSolutions sols;
  qp::Solution failure;  // first infeasible joint's verdict
  int failed_joint = -1;
};

MultiAttempt solve_joints(const TrajectoryRequest& request,
                          const arm::ArmModel& model,
                          const arm::JointConfig& apex_cfg, int H,
                          const qp::Settings& settings,
                          const JointSolutions* warm_src, int warm_h,
                          int& solves) {
  MultiAttempt out;
  out.feasible = true;
  for (int j = 0; j < kNumJoints; ++j) {
    qp::Problem prob = assemble_joint_qp_impl(request, model, apex_cfg, H, j);
    std::optional<qp::WarmStart> warm;
    if (warm_src) {
      qp::WarmStart w;
      w.x = shrink_joint_primal(warm_src->x[j], warm_h, H);
      w.y = shrink_joint_duals(warm_src->y[j], warm_h, H);
      warm = std::move(w);
    }
    qp::Solution sol = qp::solve(prob, settings, warm);
    ++solves;
    if (std::getenv("MJ_TRACE"))
      fprintf(stderr, "H=%d j=%d %s it=%d\n", H, j + 1,
              to_string(sol.status).c_str(), sol.iterations);
    if (sol.status == qp::SolveStatus::MaxIterations) {
      // One retry at a 4x iteration cap, continuing from the stalled
      // iterate; a second failure counts as infeasible for this horizon.
      qp::Settings retry = settings;
      retry.max_iter = settings.max_iter * 4;
      qp::WarmStart continue_from{sol.x, sol.y};
      sol = qp::solve(prob, retry, continue_from);
      ++solves;
    }
    if (sol.status != qp::SolveStatus::Solved) {
      out.feasible = false;
      out.failure = std::move(sol);
      out.failed_joint = j;
      return out;
    }
    // Integration amplifies equality-row residuals by roughly H^2*h, so the
    // trajectory-level 1e-6 guarantees need the pins and dynamics resolved
    // well below the generic tolerance. Re-solve tight from the current
    // point when needed; the polish path lands at ~1e-12.
    Eigen::VectorXd eq_res = prob.A * sol.x;
    double worst_eq = 0.0;
    for (int r = 0; r < 7 + 2 * H; ++r)
      worst_eq = std::max(worst_eq, std::abs(eq_res[r] - prob.lower[r]));
    if (worst_eq > 1e-9) {
      qp::Settings tight = settings;
      tight.eps_abs = 1e-10;
      tight.eps_rel = 1e-10;
      qp::WarmStart from_sol{sol.x, sol.y};
      qp::Solution refined = qp::solve(prob, tight, from_sol);
      ++solves;
      if (refined.status == qp::SolveStatus::Solved) sol = std::move(refined);
    }
    out.sols.x[j] = std::move(sol.x);
    out.sols.y[j] = std::move(sol.y);
  }
  return out;
}

Trajectory trajectory_from_joints(const TrajectoryRequest& request, int H,
                                  const JointSolutions& sols) {
  Trajectory traj;
  traj.h = request.h;
  traj.samples.resize(H + 1);
  traj.samples[0].q = request.start;
  traj.samples[0].v = JointVec::Zero();
  for (int t = 0; t <= H; ++t)
    for (int j = 0; j < kNumJoints; ++j)
      traj.samples[t].a[j] = sols.x[j][jvar_a(t)];
  for (int t = 0; t < H; ++t) {
    const auto& s = traj.samples[t];
    traj.samples[t + 1].q =
        s.q + request.h * s.v + 0.5 * request.h * request.h * s.a;
    traj.samples[t + 1].v = s.v + request.h * s.a;
  }
  return traj;
}

}  // namespace

qp::Problem assemble_joint_qp(const TrajectoryRequest& request,
                              const arm::ArmModel& model, int horizon,
                              int joint) {
  if (joint < 0 || joint >= kNumJoints)
    throw Error("minjerk: joint index out of range");
  if (horizon < request.horizon_min)
    throw Error("minjerk: horizon below horizon_min");
  const arm::JointConfig apex_cfg = expand_apex(request.apex, request, model);
  return assemble_joint_qp_impl(request, model, apex_cfg, horizon, joint);
}

HorizonResult solve_horizon(const TrajectoryRequest& request,
                            const arm::ArmModel& model,
                            const qp::Settings& solver, HorizonSearch mode) {
  request.validate(model);
  const arm::JointConfig apex_cfg = expand_apex(request.apex, request, model);
  HorizonResult result;

  MultiAttempt top =
      solve_joints(request, model, apex_cfg, request.horizon_init, solver,
                   nullptr, 0, result.qp_solves);
  if (!top.feasible)
    throw NoFeasibleTrajectoryError(
        "minjerk: QP infeasible at the initial horizon (joint " +
            std::to_string(top.failed_joint + 1) + ")",
        top.failure);

  int best_h = request.horizon_init;
  JointSolutions best = std::move(top.sols);

  auto try_h = [&](int H) {
    return solve_joints(request, model, apex_cfg, H, solver, &best, best_h,
                        result.qp_solves);
  };

  if (mode == HorizonSearch::Linear) {
    while (best_h > request.horizon_min) {
      MultiAttempt att = try_h(best_h - 1);
      if (!att.feasible) {
        result.shorter_is_infeasible = true;
        break;
      }
      best_h -= 1;
      best = std::move(att.sols);
    }
  } else {
    // Binary search for the smallest feasible horizon assuming feasibility
    // is monotone in H, then verify H*-1; descend linearly if the
    // verification finds it feasible after all.
    int lo = request.horizon_min, hi = best_h;
    while (lo < hi) {
      int mid = lo + (hi - lo) / 2;
      MultiAttempt att = try_h(mid);
      if (att.feasible) {
        hi = mid;
        best_h = mid;
        best = std::move(att.sols);
      } else {
        lo = mid + 1;
      }
    }
    if (best_h != hi) {
      MultiAttempt att = try_h(hi);
      if (!att.feasible)
        throw Error("minjerk: bisection lost feasibility at its own answer");
      best_h = hi;
      best = std::move(att.sols);
    }
    while (best_h > request.horizon_min) {
      MultiAttempt verify = try_h(best_h - 1);
      if (!verify.feasible) {
        result.shorter_is_infeasible = true;
        break;
      }
      best_h -= 1;
      best = std::move(verify.sols);
    }
  }

  result.horizon = best_h;
  result.trajectory = trajectory_from_joints(request, best_h, best);
  return result;
}

std::map<TaskKind, TaskProfile> default_task_profiles(
    const arm::ArmModel& model) {
  // Shared left-to-right sweep: start down-left, end down-right, mirror
  // images about the arm's sagittal plane. Joints 4-6 stay at zero.
  const double azimuth = 1.35;
  const double radius = 0.7;
  const double height = 0.3;
  Vec3 start_point(radius * std::cos(-azimuth), radius * std::sin(-azimuth),
                   height);
  Vec3 end_point(radius * std::cos(azimuth), radius * std::sin(azimuth),
                 height);
  TaskProfile profile;
  arm::JointConfig start = arm::JointConfig::Zero();
  start.head<3>() = apex_ik(model, start_point, arm::ElbowBranch::Up);
  arm::JointConfig end = arm::JointConfig::Zero();
  end.head<3>() = apex_ik(model, end_point, arm::ElbowBranch::Up);
  profile.start = start;
  profile.end = end;

  std::map<TaskKind, TaskProfile> profiles;
  profiles[TaskKind::Vaulting] = profile;
  profiles[TaskKind::Knocking] = profile;
  profiles[TaskKind::Weaving] = profile;
  return profiles;
}

TrajectoryRequest make_request(const TaskProfile& profile,
                               const ApexAction& action,
                               const arm::ArmModel& model) {
  TrajectoryRequest req;
  req.start = profile.start;
  req.end = profile.end;
  req.apex = action;
  req.wrist_map = profile.wrist_map;
  req.wrist_offset = profile.wrist_offset;
  req.h = model.control_period;
  return req;
}

HorizonResult trajectory_function(TaskKind kind, const ApexAction& action,
                                  const arm::ArmModel& model,
                                  const qp::Settings& solver,
                                  HorizonSearch mode) {
  auto profiles = default_task_profiles(model);
  return solve_horizon(make_request(profiles.at(kind), action, model), model,
                       solver, mode);
}

void write_trajectory_csv(const Trajectory& traj, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("minjerk: cannot write " + path);
  out << "t_index,time_s";
  for (int j = 1; j <= 6; ++j) out << ",q" << j;
  for (int j = 1; j <= 6; ++j) out << ",v" << j;
  for (int j = 1; j <= 6; ++j) out << ",a" << j;
  out << "\n";
  out.precision(17);
  for (size_t t = 0; t < traj.samples.size(); ++t) {
    out << t << "," << static_cast<double>(t) * traj.h;
    const auto& s = traj.samples[t];
    for (int j = 0; j < 6; ++j) out << "," << s.q[j];
    for (int j = 0; j < 6; ++j) out << "," << s.v[j];
    for (int j = 0; j < 6; ++j) out << "," << s.a[j];
    out << "\n";
  }
}

}  // namespace cabledyn::minjerk
