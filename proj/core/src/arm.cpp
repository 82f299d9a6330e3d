#include "cabledyn/arm.hpp"

#include <cmath>
#include <fstream>

#include "json.hpp"

namespace cabledyn::arm {

namespace {

using nlohmann::json;

Eigen::Matrix4d dh_transform(const DhRow& row, double joint_angle) {
  const double theta = joint_angle + row.joint_offset;
  const double ct = std::cos(theta), st = std::sin(theta);
  const double ca = std::cos(row.link_twist), sa = std::sin(row.link_twist);
  const double a = row.link_length, d = row.link_offset;
  Eigen::Matrix4d t;
  t << ct, -st * ca, st * sa, a * ct,
       st, ct * ca, -ct * sa, a * st,
       0.0, sa, ca, d,
       0.0, 0.0, 0.0, 1.0;
  return t;
}

JointVec vec_from_json(const json& j, const std::string& key) {
  auto arr = j.at(key);
  if (arr.size() != kNumJoints)
    throw Error("arm: field '" + key + "' must have 6 entries");
  JointVec v;
  for (int i = 0; i < kNumJoints; ++i) v[i] = arr[i].get<double>();
  return v;
}

json vec_to_json(const JointVec& v) {
  json arr = json::array();
  for (int i = 0; i < kNumJoints; ++i) arr.push_back(v[i]);
  return arr;
}

}  // namespace

void ArmModel::validate() const {
  for (int i = 0; i < kNumJoints; ++i) {
    if (!(q_min[i] < q_max[i]))
      throw Error("arm: q_min must be strictly below q_max");
  }
  auto finite = [](const JointVec& v) { return v.allFinite(); };
  if (!finite(q_min) || !finite(q_max) || !finite(v_min) || !finite(v_max) ||
      !finite(a_min) || !finite(a_max) || !finite(j_min) || !finite(j_max))
    throw Error("arm: limit vectors must be finite");
  if (!(control_period > 0)) throw Error("arm: control_period must be positive");
}

ArmModel nominal_arm() {
  ArmModel m;
  const double pi = M_PI;
  // UR5-class geometry; nominal, not manufacturer data.
  m.dh_rows = {DhRow{0.0, 0.0892, pi / 2, 0.0}, DhRow{0.425, 0.0, 0.0, 0.0},
               DhRow{0.3922, 0.0, 0.0, 0.0},    DhRow{0.109, 0.0, 0.0, 0.0},
               DhRow{0.0947, 0.0, 0.0, 0.0},    DhRow{0.0823, 0.0, 0.0, 0.0}};
  m.q_min = JointVec::Constant(-2.0 * pi);
  m.q_max = JointVec::Constant(2.0 * pi);
  m.v_max << 3.15, 3.15, 3.15, 6.28, 6.28, 6.28;
  m.v_min = -m.v_max;
  m.a_max << 15.0, 15.0, 15.0, 25.0, 25.0, 25.0;
  m.a_min = -m.a_max;
  m.j_max << 450.0, 450.0, 450.0, 900.0, 900.0, 900.0;
  m.j_min = -m.j_max;
  m.control_period = 0.008;
  m.validate();
  return m;
}

ArmModel arm_from_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("arm: cannot open " + path);
  json j = json::parse(in);
  ArmModel m;
  auto rows = j.at("dh_rows");
  if (rows.size() != kNumJoints) throw Error("arm: dh_rows must have 6 rows");
  for (int i = 0; i < kNumJoints; ++i) {
    auto r = rows[i];
    if (r.size() != 4) throw Error("arm: each dh row needs 4 entries");
    m.dh_rows[i] = DhRow{r[0].get<double>(), r[1].get<double>(),
                         r[2].get<double>(), r[3].get<double>()};
  }
  m.q_min = vec_from_json(j, "q_min");
  m.q_max = vec_from_json(j, "q_max");
  m.v_min = vec_from_json(j, "v_min");
  m.v_max = vec_from_json(j, "v_max");
  m.a_min = vec_from_json(j, "a_min");
  m.a_max = vec_from_json(j, "a_max");
  m.j_min = vec_from_json(j, "j_min");
  m.j_max = vec_from_json(j, "j_max");
  m.control_period = j.at("control_period").get<double>();
  m.validate();
  return m;
}

void arm_to_json_file(const ArmModel& model, const std::string& path) {
  json j;
  j["dh_rows"] = json::array();
  for (const auto& r : model.dh_rows)
    j["dh_rows"].push_back(
        {r.link_length, r.link_offset, r.link_twist, r.joint_offset});
  j["q_min"] = vec_to_json(model.q_min);
  j["q_max"] = vec_to_json(model.q_max);
  j["v_min"] = vec_to_json(model.v_min);
  j["v_max"] = vec_to_json(model.v_max);
  j["a_min"] = vec_to_json(model.a_min);
  j["a_max"] = vec_to_json(model.a_max);
  j["j_min"] = vec_to_json(model.j_min);
  j["j_max"] = vec_to_json(model.j_max);
  j["control_period"] = model.control_period;
  j["note"] =
      "nominal UR5-class parameters; artifact defaults, not from any datasheet";
  std::ofstream out(path);
  if (!out) throw Error("arm: cannot write " + path);
  out << j.dump(2) << "\n";
}

Pose forward_kinematics(const ArmModel& model, const JointConfig& config) {
  if (!config.allFinite()) throw Error("arm: non-finite joint configuration");
  Eigen::Matrix4d t = Eigen::Matrix4d::Identity();
  for (int i = 0; i < kNumJoints; ++i)
    t = t * dh_transform(model.dh_rows[i], config[i]);
  Pose pose;
  pose.position = t.block<3, 1>(0, 3);
  pose.orientation = t.block<3, 3>(0, 0);
  return pose;
}

Vec3 apex_ik(const ArmModel& model, const Vec3& point, ElbowBranch branch,
             const Vec3& wrist) {
  // The closed form requires the planar structure of the nominal arm:
  // a shoulder lifted purely along z and coplanar links 2..6.
  const auto& dh = model.dh_rows;
  if (std::abs(dh[0].link_length) > 1e-12 ||
      std::abs(std::abs(dh[0].link_twist) - M_PI / 2) > 1e-9)
    throw Error("arm: apex_ik requires a z-offset shoulder (row 1: a=0, |alpha|=pi/2)");
  for (int i = 1; i < kNumJoints; ++i)
    if (std::abs(dh[i].link_offset) > 1e-12 ||
        std::abs(dh[i].link_twist) > 1e-12)
      throw Error("arm: apex_ik requires coplanar links 2..6 (d=0, alpha=0)");

  const double l1 = dh[1].link_length;
  // Rigid elbow-to-effector polyline for the fixed wrist values.
  double angle = 0.0;
  Eigen::Vector2d e(dh[2].link_length, 0.0);
  for (int i = 3; i < kNumJoints; ++i) {
    angle += wrist[i - 3] + dh[i].joint_offset;
    e += dh[i].link_length * Eigen::Vector2d(std::cos(angle), std::sin(angle));
  }
  const double l2 = e.norm();
  const double delta = std::atan2(e.y(), e.x());

  const double max_reach = l1 + l2;
  const double min_reach = std::abs(l1 - l2);

  const double radial = std::hypot(point.x(), point.y());
  const double height = point.z() - dh[0].link_offset;
  const double rho = std::hypot(radial, height);
  if (rho > max_reach + 1e-12 || rho < min_reach - 1e-12)
    throw OutOfReachError("arm: apex point outside reachable annulus",
                          min_reach, max_reach);

  const double base = std::atan2(point.y(), point.x());
  double cos_beta = (rho * rho - l1 * l1 - l2 * l2) / (2.0 * l1 * l2);
  cos_beta = std::min(1.0, std::max(-1.0, cos_beta));
  double beta = std::acos(cos_beta);
  if (branch == ElbowBranch::Up) beta = -beta;

  const double phi = std::atan2(height, radial);
  const double psi = std::atan2(l2 * std::sin(beta), l1 + l2 * std::cos(beta));
  const double shoulder = phi - psi - dh[1].joint_offset;
  const double elbow = beta - delta - dh[2].joint_offset;
  return Vec3(base - dh[0].joint_offset, shoulder, elbow);
}

std::string to_string(LimitQuantity q) {
  switch (q) {
    case LimitQuantity::Position: return "q";
    case LimitQuantity::Velocity: return "v";
    case LimitQuantity::Acceleration: return "a";
    case LimitQuantity::Jerk: return "j";
  }
  return "?";
}

ViolationReport within_limits(const ArmModel& model, const Trajectory& traj) {
  constexpr double kSlack = 1e-8;
  ViolationReport report;
  auto check = [&](int t, int joint, LimitQuantity quantity, double value,
                   double lo, double hi) {
    if (value < lo - kSlack)
      report.entries.push_back({t, joint, quantity, value, lo});
    else if (value > hi + kSlack)
      report.entries.push_back({t, joint, quantity, value, hi});
  };
  const int count = static_cast<int>(traj.samples.size());
  for (int t = 0; t < count; ++t) {
    const auto& s = traj.samples[t];
    for (int j = 0; j < kNumJoints; ++j) {
      check(t, j, LimitQuantity::Position, s.q[j], model.q_min[j],
            model.q_max[j]);
      check(t, j, LimitQuantity::Velocity, s.v[j], model.v_min[j],
            model.v_max[j]);
      check(t, j, LimitQuantity::Acceleration, s.a[j], model.a_min[j],
            model.a_max[j]);
      if (t + 1 < count && traj.h > 0) {
        double jerk = (traj.samples[t + 1].a[j] - s.a[j]) / traj.h;
        check(t, j, LimitQuantity::Jerk, jerk, model.j_min[j], model.j_max[j]);
      }
    }
  }
  return report;
}

}  // namespace cabledyn::arm
