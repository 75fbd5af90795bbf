#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

#include "fsfc/dual_ops.hpp"
#include "fsfc/func_data.hpp"

namespace fsfc {

struct SolverConfig {
  double tol = 1e-4;
  double mu = 0.2;          // Armijo fraction, in (0, 0.5)
  double sigma0 = 1.0;
  double sigma_growth = 2.0;
  double sigma_max = 1e8;
  int max_outer = 100;
  int max_inner = 50;
  int max_linesearch_halvings = 50;

  void validate() const;
};

// Iterate carried across warm-started fits. Y_i V_i stays in (-1, 0).
struct SolverState {
  Eigen::VectorXd V;  // dual, n
  Eigen::VectorXd Z;  // dual, pk
  Eigen::VectorXd B;  // primal multiplier, pk
  double sigma = 0.0;
  int outer_iter = 0;
  int inner_iter_total = 0;
  int newton_iter_total = 0;
};

enum class SolveStatus {
  kConverged,
  kMaxOuterReached,
  kLineSearchStalled,
};

struct OuterTraceEntry {
  int outer = 0;
  int inner_steps = 0;
  double sigma = 0.0;
  double kkt = 0.0;
  int active_count = 0;
  double psi = 0.0;
};

struct SolveReport {
  Eigen::VectorXd B;
  Eigen::VectorXd V;
  Eigen::VectorXd Z;
  double kkt_residual = 0.0;
  std::vector<int> active_features;  // blocks with ||B_j|| > 0
  bool converged = false;
  SolveStatus status = SolveStatus::kMaxOuterReached;
  int outer_iterations = 0;
  int inner_iterations = 0;
  int newton_iterations = 0;
  std::vector<OuterTraceEntry> trace;
  double wall_seconds = 0.0;
  // Time spent solving Newton linear systems, for cost-scaling diagnostics.
  double newton_solve_seconds = 0.0;
  long newton_solve_count = 0;
};

// Closed-form Z minimizer of the augmented Lagrangian:
// Zbar = B/sigma - X^T V - prox_{sigma pi}(B - sigma X^T V) / sigma.
Eigen::VectorXd z_update(const Eigen::VectorXd& dual, const Eigen::VectorXd& multiplier,
                         const ScoreMatrix& scores, const PenaltyParams& params);

struct NewtonStats {
  double seconds = 0.0;
  long solves = 0;
  long smw_solves = 0;
  long direct_solves = 0;
};

// Solves (H_{h*} + sigma X_J Q_J X_J^T) D = -grad. Uses the
// Sherman-Morrison-Woodbury route (rk x rk system) when r k < n and the
// active prox blocks are safely nonsingular, otherwise factors the n x n
// system directly. Throws on a singular system after both routes fail.
Eigen::VectorXd newton_direction(const ActiveSetInfo& active, const Eigen::VectorXd& grad_psi,
                                 const Eigen::VectorXd& hess_hstar_diag, const ScoreMatrix& scores,
                                 double sigma, const PenaltyParams& params,
                                 NewtonStats* stats = nullptr);

struct LineSearchResult {
  double step = 0.0;
  double value = 0.0;
  int halvings = 0;
  bool ok = false;
};

// Armijo backtracking with step halving: finds s in {1, 1/2, 1/4, ...} with
// value_at(s) <= value0 + mu s slope. value_at may return +infinity to reject
// a trial point (dual-infeasible iterates).
template <typename F>
LineSearchResult armijo_backtrack(F&& value_at, double value0, double slope, double mu,
                                  int max_halvings) {
  LineSearchResult result;
  double s = 1.0;
  for (int h = 0; h <= max_halvings; ++h) {
    const double value = value_at(s);
    if (value <= value0 + mu * s * slope) {
      result.step = s;
      result.value = value;
      result.halvings = h;
      result.ok = true;
      return result;
    }
    s *= 0.5;
  }
  result.halvings = max_halvings + 1;
  return result;
}

struct InnerResult {
  int newton_steps = 0;
  bool criterion_met = false;
  bool stalled = false;
  std::vector<double> psi_trace;  // psi at each Newton iterate, strictly decreasing
  Eigen::VectorXd xtv;            // X^T V at the returned iterate
};

// Alternating minimization of L_sigma over (V, Z): semismooth Newton steps on
// psi(V) with the closed-form Z update, until
// ||grad psi(V)|| <= 2 sigma^{1/2} sum_j ||(X^T V + Z)_j||, both sides at the
// current iterate. Updates state.V and state.Z in place.
InnerResult inner_solve(SolverState& state, const ScoreMatrix& scores,
                        const Eigen::VectorXd& labels, const PenaltyParams& params,
                        const SolverConfig& config, NewtonStats* stats = nullptr);

// Full outer loop: inner solve, multiplier update
// B <- B - sigma (X^T V + Z), sigma growth, stop on the standardized KKT
// residual (1 + ||V|| + sum_j ||Z_j||)^{-1} sum_j ||(X^T V + Z)_j|| < tol.
SolveReport dal_fit(const ScoreMatrix& scores, const Eigen::VectorXd& labels, double lambda1,
                    double lambda2, const Eigen::VectorXd& weights,
                    const std::optional<SolverState>& init, const SolverConfig& config);

// Standardized KKT residual of Eq (11), computed literally from (V, Z).
double kkt_residual(const Eigen::VectorXd& dual, const Eigen::VectorXd& dual_block_vec,
                    const ScoreMatrix& scores);

}  // namespace fsfc
