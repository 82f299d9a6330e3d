#pragma once

#include <Eigen/Core>
#include <Eigen/SparseCore>
#include <optional>
#include <string>
#include <utility>

namespace cabledyn::qp {

/// Convex QP in canonical form: min 1/2 x'Px + q'x  s.t.  l <= Ax <= u.
/// Rows with l == u act as equality constraints; bounds may be +-infinity.
struct Problem {
  Eigen::Index n = 0;
  Eigen::Index m = 0;
  Eigen::SparseMatrix<double> P;  // n x n, symmetric positive semidefinite
  Eigen::VectorXd q;              // n
  Eigen::SparseMatrix<double> A;  // m x n
  Eigen::VectorXd lower;          // m
  Eigen::VectorXd upper;          // m

  /// Throws std::invalid_argument on inconsistent dimensions, l > u, or an
  /// asymmetric P. Positive semidefiniteness is probed, not proven.
  void validate() const;

  double objective(const Eigen::VectorXd& x) const;
};

enum class SolveStatus { Solved, PrimalInfeasible, MaxIterations };

std::string to_string(SolveStatus status);

struct Settings {
  double eps_abs = 1e-6;
  double eps_rel = 1e-6;
  int max_iter = 20000;
  double rho = 0.1;    // splitting penalty (inequality rows)
  double sigma = 1e-6; // primal regularization
  double alpha = 1.6;  // relaxation
  double infeasibility_tol = 1e-5;
  bool polish = true;
  int check_interval = 25;
  double rho_eq_scale = 1e4;  // rho multiplier for l == u rows
  int scaling_iters = 0;      // Ruiz equilibration rounds (opt-in: helps badly
                              // scaled data, hurts the trajectory QPs)
  bool adaptive_rho = true;   // rebalance rho from the residual ratio
  int adaptive_rho_interval = 100;
  double adaptive_rho_tolerance = 2.0;  // adapt when rho moves this much

  void validate() const;
};

struct Solution {
  Eigen::VectorXd x;  // primal
  Eigen::VectorXd y;  // dual for l <= Ax <= u
  SolveStatus status = SolveStatus::MaxIterations;
  int iterations = 0;
  double primal_residual = 0.0;
  double dual_residual = 0.0;
  double objective = 0.0;
  bool polished = false;
  std::string diagnostic;
};

struct WarmStart {
  Eigen::VectorXd x;
  Eigen::VectorXd y;
};

/// ADMM operator-splitting solve. Deterministic: identical inputs produce an
/// identical iterate sequence.
Solution solve(const Problem& problem, const Settings& settings = {},
               const std::optional<WarmStart>& warm = std::nullopt);

/// Infinity-norm residuals (primal feasibility, dual stationarity) of a
/// candidate primal/dual pair, evaluated directly on the problem data.
std::pair<double, double> check_kkt(const Problem& problem,
                                    const Eigen::VectorXd& x,
                                    const Eigen::VectorXd& y);

/// Plain-text dump (matrix-market-style triplets) for offline inspection.
void dump_problem(const Problem& problem, const std::string& path);

}  // namespace cabledyn::qp
