#include "cabledyn/minjerk.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>

#include "cabledyn/rng.hpp"
#include "doctest.h"

using namespace cabledyn;
using namespace cabledyn::minjerk;

namespace {

arm::ArmModel generous_arm() {
  arm::ArmModel m = arm::nominal_arm();
  m.v_max = JointVec::Constant(50.0);
  m.v_min = -m.v_max;
  m.a_max = JointVec::Constant(500.0);
  m.a_min = -m.a_max;
  m.j_max = JointVec::Constant(50000.0);
  m.j_min = -m.j_max;
  return m;
}

TrajectoryRequest one_dof_request(double target, double apex_q, int horizon) {
  TrajectoryRequest req;
  req.start = arm::JointConfig::Zero();
  req.end = arm::JointConfig::Zero();
  req.end[0] = target;
  req.apex.apex_joints = Vec3(apex_q, 0.0, 0.0);
  req.h = 0.008;
  req.horizon_init = horizon;
  req.horizon_min = horizon;
  return req;
}

double max_equality_residual(const HorizonResult& res,
                             const TrajectoryRequest& req,
                             const arm::ArmModel& model) {
  const auto& tr = res.trajectory;
  int H = res.horizon;
  arm::JointConfig apex_cfg = expand_apex(req.apex, req, model);
  double err = 0.0;
  err = std::max(err, (tr.samples[0].q - req.start).cwiseAbs().maxCoeff());
  err = std::max(err, (tr.samples[H / 2].q - apex_cfg).cwiseAbs().maxCoeff());
  err = std::max(err, (tr.samples[H].q - req.end).cwiseAbs().maxCoeff());
  err = std::max(err, tr.samples[0].v.cwiseAbs().maxCoeff());
  err = std::max(err, tr.samples[H].v.cwiseAbs().maxCoeff());
  return err;
}

}  // namespace

TEST_CASE("expand_apex") {
  arm::ArmModel m = arm::nominal_arm();
  TrajectoryRequest req;

  SUBCASE("zero linear map passes the action through") {
    req.wrist_map = Mat3::Zero();
    req.wrist_offset = Vec3::Zero();
    ApexAction a{Vec3(0.1, -1.2, 1.0)};
    arm::JointConfig c = expand_apex(a, req, m);
    CHECK(c[0] == 0.1);
    CHECK(c[1] == -1.2);
    CHECK(c[2] == 1.0);
    CHECK(c[3] == 0.0);
    CHECK(c[4] == 0.0);
    CHECK(c[5] == 0.0);
  }

  SUBCASE("constant map pins the wrist preset") {
    req.wrist_offset = Vec3(0.2, -0.4, 0.6);
    for (double base : {-0.5, 0.0, 0.7}) {
      arm::JointConfig c = expand_apex(ApexAction{Vec3(base, 0.3, -0.9)}, req, m);
      CHECK(c[3] == 0.2);
      CHECK(c[4] == -0.4);
      CHECK(c[5] == 0.6);
    }
  }

  SUBCASE("linear rows scale the apex joints") {
    req.wrist_map.setZero();
    req.wrist_map(0, 0) = 0.5;  // joint 4 = 0.5 * q1
    arm::JointConfig c = expand_apex(ApexAction{Vec3(0.2, 0.1, -0.3)}, req, m);
    CHECK(c[3] == doctest::Approx(0.1));
  }

  SUBCASE("out-of-limit apex raises a limit error") {
    ApexAction a{Vec3(100.0, 0.0, 0.0)};
    CHECK_THROWS_AS(expand_apex(a, req, m), LimitError);
  }
}

TEST_CASE("assemble_qp dimensions and apex index") {
  arm::ArmModel m = arm::nominal_arm();
  TrajectoryRequest req;
  req.horizon_min = 2;
  qp::Problem prob = assemble_qp(req, m, 2);
  CHECK(prob.n == 54);  // 3 blocks of 18
  CHECK(prob.m == 36 * 2 + 30);
  // The apex equality rows (6..11) pin q at t = floor(2/2) = 1, i.e. columns
  // 18..23.
  Eigen::MatrixXd dense = Eigen::MatrixXd(prob.A);
  for (int j = 0; j < 6; ++j) {
    CHECK(dense(6 + j, 18 + j) == 1.0);
    CHECK(prob.lower[6 + j] == prob.upper[6 + j]);
  }
}

TEST_CASE("constant trajectory is feasible with objective zero") {
  arm::ArmModel m = arm::nominal_arm();
  TrajectoryRequest req;
  req.start = arm::JointConfig::Constant(0.4);
  req.end = req.start;
  req.apex.apex_joints = Vec3::Constant(0.4);
  req.wrist_offset = Vec3::Constant(0.4);
  req.horizon_init = 30;
  req.horizon_min = 2;
  HorizonResult res = solve_horizon(req, m);
  CHECK(res.horizon == req.horizon_min);
  for (const auto& s : res.trajectory.samples) {
    CHECK((s.q - req.start).cwiseAbs().maxCoeff() < 1e-6);
    CHECK(s.v.cwiseAbs().maxCoeff() < 1e-6);
    CHECK(s.a.cwiseAbs().maxCoeff() < 1e-5);
  }
}

TEST_CASE("objective matches a naive re-evaluation loop") {
  arm::ArmModel m = arm::nominal_arm();
  TrajectoryRequest req;
  req.weights << 1.0, 2.0, 0.5, 1.5, 3.0, 1.0;
  const int H = 7;
  qp::Problem prob = assemble_qp(req, m, H);
  Rng rng(5);
  Eigen::VectorXd x(prob.n);
  for (Eigen::Index i = 0; i < prob.n; ++i) x[i] = rng.normal();
  // Naive loop over acceleration differences.
  double expected = 0.0;
  for (int t = 0; t < H; ++t)
    for (int j = 0; j < 6; ++j) {
      double da = x[18 * (t + 1) + 12 + j] - x[18 * t + 12 + j];
      expected += req.weights[j] * da * da;
    }
  expected /= 2.0 * req.h;
  CHECK(prob.objective(x) == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("one-dof move matches the minimum-jerk quintic") {
  arm::ArmModel m = generous_arm();
  TrajectoryRequest req = one_dof_request(1.0, 0.5, 50);
  HorizonResult res = solve_horizon(req, m);
  REQUIRE(res.horizon == 50);
  double max_err = 0.0;
  for (int t = 0; t <= 50; ++t) {
    double s = static_cast<double>(t) / 50.0;
    double quintic = 10 * s * s * s - 15 * s * s * s * s + 6 * s * s * s * s * s;
    max_err = std::max(max_err, std::abs(res.trajectory.samples[t].q[0] - quintic));
  }
  CHECK(max_err < 0.02);
  // Joints 2..6 stay pinned at zero.
  for (const auto& s : res.trajectory.samples)
    CHECK(s.q.tail<5>().cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("horizon shrinks to the smallest feasible value") {
  arm::ArmModel m = arm::nominal_arm();
  TrajectoryRequest req;
  req.end[0] = 1.0;
  req.apex.apex_joints = Vec3(0.5, 0.0, 0.0);
  req.horizon_init = 90;

  HorizonResult res = solve_horizon(req, m);
  CHECK(res.horizon > req.horizon_min);
  CHECK(res.shorter_is_infeasible);
  CHECK(arm::within_limits(m, res.trajectory).empty());
  CHECK(max_equality_residual(res, req, m) < 1e-6);

  SUBCASE("H* equals an exhaustive upward feasibility scan") {
    // Mirror the search's verdict semantics: one retry at a 4x iteration cap
    // before a horizon counts as infeasible.
    int scan_h = req.horizon_min;
    for (; scan_h <= req.horizon_init; ++scan_h) {
      qp::Problem prob = assemble_qp(req, m, scan_h);
      qp::Solution sol = qp::solve(prob);
      if (sol.status == qp::SolveStatus::MaxIterations) {
        qp::Settings retry;
        retry.max_iter *= 4;
        sol = qp::solve(prob, retry, qp::WarmStart{sol.x, sol.y});
      }
      if (sol.status == qp::SolveStatus::Solved) break;
    }
    CHECK(scan_h == res.horizon);
  }

  SUBCASE("halving the velocity limit strictly increases H*") {
    arm::ArmModel slow = m;
    slow.v_max /= 2.0;
    slow.v_min = -slow.v_min.cwiseAbs() / 2.0;
    TrajectoryRequest req_slow = req;
    req_slow.horizon_init = 200;
    HorizonResult res_slow = solve_horizon(req_slow, slow);
    CHECK(res_slow.horizon > res.horizon);
  }

  SUBCASE("bisection agrees with the linear decrement") {
    HorizonResult res_bi =
        solve_horizon(req, m, qp::Settings{}, HorizonSearch::Bisection);
    CHECK(res_bi.horizon == res.horizon);
    CHECK(res_bi.shorter_is_infeasible);
    CHECK(res_bi.qp_solves < res.qp_solves);
  }
}

TEST_CASE("infeasible initial horizon raises with a certificate") {
  arm::ArmModel m = arm::nominal_arm();
  TrajectoryRequest req;
  req.end[0] = 2.0;
  req.apex.apex_joints = Vec3(1.0, 0.0, 0.0);
  req.horizon_init = 4;  // far too short for a 2 rad move
  req.horizon_min = 4;
  CHECK_THROWS_AS(solve_horizon(req, m), NoFeasibleTrajectoryError);
}

TEST_CASE("monotone feasibility holds on sampled requests") {
  arm::ArmModel m = arm::nominal_arm();
  Rng rng(31337);
  int violations = 0;
  for (int trial = 0; trial < 12; ++trial) {
    Rng tr = rng.fork("mono", trial);
    TrajectoryRequest req;
    req.end[0] = tr.uniform(-1.2, 1.2);
    req.end[1] = tr.uniform(-0.8, 0.8);
    req.apex.apex_joints =
        Vec3(tr.uniform(-1.0, 1.0), tr.uniform(-0.6, 0.6), tr.uniform(-0.6, 0.6));
    int h_probe = 10 + static_cast<int>(tr.uniform_index(40));
    qp::Solution at_h = qp::solve(assemble_qp(req, m, h_probe));
    if (at_h.status != qp::SolveStatus::Solved) continue;
    qp::Solution at_h1 = qp::solve(assemble_qp(req, m, h_probe + 1));
    if (at_h1.status != qp::SolveStatus::Solved) ++violations;
  }
  CHECK(violations == 0);
}

TEST_CASE("trajectory_function") {
  arm::ArmModel m = arm::nominal_arm();
  auto profiles = default_task_profiles(m);

  SUBCASE("vaulting profile is mirror symmetric about the sagittal plane") {
    const auto& p = profiles.at(TaskKind::Vaulting);
    CHECK(p.start[0] == doctest::Approx(-p.end[0]).epsilon(1e-9));
    CHECK(p.start[1] == doctest::Approx(p.end[1]).epsilon(1e-9));
    CHECK(p.start[2] == doctest::Approx(p.end[2]).epsilon(1e-9));
  }

  SUBCASE("profiles sit inside the joint box") {
    for (const auto& [kind, p] : profiles) {
      for (int j = 0; j < kNumJoints; ++j) {
        CHECK(p.start[j] >= m.q_min[j]);
        CHECK(p.start[j] <= m.q_max[j]);
      }
    }
  }
}

TEST_CASE("trajectory function is deterministic and apex-sensitive") {
  // Shrunk copies of the real requests keep this test quick.
  arm::ArmModel m = arm::nominal_arm();
  auto profiles = default_task_profiles(m);
  ApexAction action{Vec3(0.1, 0.9, -0.8)};
  TrajectoryRequest req = make_request(profiles.at(TaskKind::Vaulting), action, m);
  HorizonResult a = solve_horizon(req, m, qp::Settings{}, HorizonSearch::Bisection);
  HorizonResult b = solve_horizon(req, m, qp::Settings{}, HorizonSearch::Bisection);
  CHECK(a.horizon == b.horizon);
  REQUIRE(a.trajectory.samples.size() == b.trajectory.samples.size());
  for (size_t t = 0; t < a.trajectory.samples.size(); ++t)
    CHECK((a.trajectory.samples[t].q - b.trajectory.samples[t].q)
              .cwiseAbs()
              .maxCoeff() == 0.0);
  CHECK(arm::within_limits(m, a.trajectory).empty());
  CHECK(max_equality_residual(a, req, m) < 1e-6);

  ApexAction shifted{Vec3(0.1, 0.95, -0.8)};
  TrajectoryRequest req2 = make_request(profiles.at(TaskKind::Vaulting), shifted, m);
  HorizonResult c = solve_horizon(req2, m, qp::Settings{}, HorizonSearch::Bisection);
  // Start and end samples unchanged, apex sample moved per expand_apex.
  CHECK((c.trajectory.samples.front().q - a.trajectory.samples.front().q)
            .cwiseAbs()
            .maxCoeff() < 1e-9);
  CHECK((c.trajectory.samples.back().q - a.trajectory.samples.back().q)
            .cwiseAbs()
            .maxCoeff() < 1e-6);
  CHECK(c.trajectory.samples[c.horizon / 2].q[1] ==
        doctest::Approx(0.95).epsilon(1e-6));
}

TEST_CASE("csv export carries the mandated header and rows") {
  Trajectory traj;
  traj.h = 0.008;
  traj.samples.resize(3);
  for (int t = 0; t < 3; ++t) {
    traj.samples[t].q = JointVec::Constant(t);
    traj.samples[t].v = JointVec::Zero();
    traj.samples[t].a = JointVec::Zero();
  }
  auto path = std::filesystem::temp_directory_path() / "cabledyn_traj.csv";
  write_trajectory_csv(traj, path.string());
  std::ifstream in(path);
  std::string header;
  std::getline(in, header);
  CHECK(header ==
        "t_index,time_s,q1,q2,q3,q4,q5,q6,v1,v2,v3,v4,v5,v6,a1,a2,a3,a4,a5,a6");
  int rows = 0;
  std::string line;
  while (std::getline(in, line))
    if (!line.empty()) ++rows;
  CHECK(rows == 3);
  std::filesystem::remove(path);
}
