#pragma once

#include <Eigen/Dense>
#include <vector>

#include "fsfc/func_data.hpp"

namespace fsfc {

// Group elastic-net penalty parameters. weights(j) = omega_j > 0; an infinite
// weight excludes feature j (its coefficient block must stay zero).
struct PenaltyParams {
  double lambda1 = 0.0;
  double lambda2 = 0.0;
  double sigma = 1.0;
  Eigen::VectorXd weights;

  void validate(int p) const;
};

// Relative slack used when testing a block norm against its soft threshold.
// Exactly-at-threshold blocks arise by construction at lambda1 = lambda_max;
// the slack makes the boundary side deterministic under round-off.
inline constexpr double kThresholdSlack = 1e-13;

// sum_i log(1 + exp(-Y_i f_i)), evaluated with the stable softplus form.
double logistic_loss(const Eigen::VectorXd& margins, const Eigen::VectorXd& labels);

// sum_j omega_j (lambda1 ||B_j|| + lambda2/2 ||B_j||^2). Blocks with infinite
// weight must be zero.
double penalty_value(const Eigen::VectorXd& coefficients, const PenaltyParams& params, int k);

// prox of sigma * omega * (lambda1 ||.|| + lambda2/2 ||.||^2):
// (1 + sigma omega lambda2)^{-1} [1 - sigma omega lambda1 / ||x||]_+ x.
Eigen::VectorXd prox_group(const Eigen::VectorXd& block, double sigma, double omega,
                           double lambda1, double lambda2);

// Blockwise prox over the full pk vector.
Eigen::VectorXd prox_penalty(const Eigen::VectorXd& vec, const PenaltyParams& params, int k);

// Fenchel conjugate of the penalty: sum_j (2 omega_j lambda2)^{-1}
// ([||Z_j|| - omega_j lambda1]_+)^2. Requires lambda2 > 0.
double pi_conjugate(const Eigen::VectorXd& dual_block_vec, const PenaltyParams& params, int k);

// The dual domain of the logistic conjugate: Y_i V_i in (-1, 0) for all i.
bool dual_feasible(const Eigen::VectorXd& dual, const Eigen::VectorXd& labels);

// Fenchel conjugate of the logistic loss (per Prop 1 with the proof's sign
// restriction). Returns +infinity outside the domain.
double h_conjugate(const Eigen::VectorXd& dual, const Eigen::VectorXd& labels);

// Gradient and diagonal Hessian of h* on the open domain:
//   grad_i = Y_i log((1 - |Y_i V_i|) / |Y_i V_i|)
//   hess_i = 1 / (|Y_i V_i| (1 - |Y_i V_i|)) > 0
// The gradient is sometimes written with the fraction inverted; differentiating
// h* (or its finite differences) gives the form above, the only one consistent
// with the positive Hessian.
void h_conjugate_derivatives(const Eigen::VectorXd& dual, const Eigen::VectorXd& labels,
                             Eigen::VectorXd& grad, Eigen::VectorXd& hess_diag);

// Active-set information at T = B - sigma X^T V. Feature j is active when
// ||T_j|| exceeds its soft threshold; Q_blocks holds the k x k prox Jacobian
// P_[j] for each active j.
struct ActiveSetInfo {
  std::vector<int> indices;
  Eigen::VectorXd T;            // pk
  Eigen::VectorXd block_norms;  // p
  std::vector<Eigen::MatrixXd> Q_blocks;
};

struct PsiEval {
  double value = 0.0;
  Eigen::VectorXd gradient;  // n
  ActiveSetInfo active;
};

// psi(V) = L_sigma(V | Zbar(V), B) and its gradient:
//   psi(V)  = h*(V) + (1/2 sigma) sum_j ((1 + sigma w_j l2) ||prox(T_j)||^2 - ||B_j||^2)
//   grad    = grad h*(V) - X prox_{sigma pi}(T)
// Throws DataError if V is dual-infeasible.
PsiEval psi_eval(const Eigen::VectorXd& dual, const Eigen::VectorXd& labels,
                 const Eigen::VectorXd& multiplier, const ScoreMatrix& scores,
                 const PenaltyParams& params);

// Same evaluation with X^T V supplied by the caller (the solver maintains it
// incrementally across line-search steps).
PsiEval psi_eval_with_product(const Eigen::VectorXd& dual, const Eigen::VectorXd& labels,
                              const Eigen::VectorXd& multiplier, const ScoreMatrix& scores,
                              const PenaltyParams& params, const Eigen::VectorXd& xtv);

// Primal h(XB) + pi(B) and dual h*(V) + pi*(Z) objective values. For feasible
// pairs with X^T V + Z = 0, primal + dual >= 0 (weak duality).
std::pair<double, double> objective_values(const Eigen::VectorXd& coefficients,
                                           const Eigen::VectorXd& dual,
                                           const Eigen::VectorXd& dual_block_vec,
                                           const ScoreMatrix& scores,
                                           const Eigen::VectorXd& labels,
                                           const PenaltyParams& params);

}  // namespace fsfc
