#pragma once

#include <Eigen/Core>
#include <stdexcept>
#include <string>

namespace cabledyn {

inline constexpr int kNumJoints = 6;

using JointVec = Eigen::Matrix<double, kNumJoints, 1>;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

/// The three benchmark tasks.
enum class TaskKind { Vaulting, Knocking, Weaving };

std::string to_string(TaskKind kind);
TaskKind task_kind_from_string(const std::string& name);

/// Base error type for the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace cabledyn
