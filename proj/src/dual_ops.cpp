#include "fsfc/dual_ops.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "fsfc/errors.hpp"
#include "fsfc/util.hpp"

namespace fsfc {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kLogGuard = 1e-12;  // clamp applied inside log arguments only

double clamped_log(double x) { return std::log(std::clamp(x, kLogGuard, 1.0 - kLogGuard)); }

void check_dims(const Eigen::VectorXd& vec, int k, const char* what) {
  if (k < 1 || vec.size() % k != 0) {
    throw DataError(std::string(what) + " length " + std::to_string(vec.size()) +
                    " is not a multiple of k = " + std::to_string(k));
  }
}

}  // namespace

void PenaltyParams::validate(int p) const {
  if (!(lambda1 > 0.0)) {
    throw ConfigError("lambda1 must be positive");
  }
  if (lambda2 < 0.0) {
    throw ConfigError("lambda2 must be nonnegative");
  }
  if (!(sigma > 0.0)) {
    throw ConfigError("sigma must be positive");
  }
  if (static_cast<int>(weights.size()) != p) {
    throw ConfigError("weights length " + std::to_string(weights.size()) +
                      " does not match p = " + std::to_string(p));
  }
  for (int j = 0; j < p; ++j) {
    if (!(weights(j) > 0.0)) {
      throw ConfigError("weights must be positive; weight " + std::to_string(j) + " is " +
                        std::to_string(weights(j)));
    }
  }
}

double logistic_loss(const Eigen::VectorXd& margins, const Eigen::VectorXd& labels) {
  if (margins.size() != labels.size()) {
    throw DataError("margins and labels length mismatch");
  }
  double total = 0.0;
  for (Eigen::Index i = 0; i < margins.size(); ++i) {
    total += softplus(-labels(i) * margins(i));
  }
  return total;
}

double penalty_value(const Eigen::VectorXd& coefficients, const PenaltyParams& params, int k) {
  check_dims(coefficients, k, "coefficient vector");
  const int p = static_cast<int>(coefficients.size()) / k;
  double total = 0.0;
  for (int j = 0; j < p; ++j) {
    const double norm = coefficients.segment(static_cast<Eigen::Index>(j) * k, k).norm();
    const double w = params.weights(j);
    if (std::isinf(w)) {
      if (norm > 0.0) {
        throw DataError("nonzero coefficient block " + std::to_string(j) +
                        " with infinite weight");
      }
      continue;
    }
    total += w * (params.lambda1 * norm + 0.5 * params.lambda2 * norm * norm);
  }
  return total;
}

Eigen::VectorXd prox_group(const Eigen::VectorXd& block, double sigma, double omega,
                           double lambda1, double lambda2) {
  const double threshold = sigma * omega * lambda1;
  const double norm = block.norm();
  if (!(norm > threshold * (1.0 + kThresholdSlack)) || std::isinf(threshold)) {
    return Eigen::VectorXd::Zero(block.size());
  }
  const double scale = (1.0 - threshold / norm) / (1.0 + sigma * omega * lambda2);
  return scale * block;
}

Eigen::VectorXd prox_penalty(const Eigen::VectorXd& vec, const PenaltyParams& params, int k) {
  check_dims(vec, k, "prox input");
  const int p = static_cast<int>(vec.size()) / k;
  Eigen::VectorXd out(vec.size());
  for (int j = 0; j < p; ++j) {
    out.segment(static_cast<Eigen::Index>(j) * k, k) =
        prox_group(vec.segment(static_cast<Eigen::Index>(j) * k, k), params.sigma,
                   params.weights(j), params.lambda1, params.lambda2);
  }
  return out;
}

double pi_conjugate(const Eigen::VectorXd& dual_block_vec, const PenaltyParams& params, int k) {
  if (!(params.lambda2 > 0.0)) {
    throw ConfigError("pi_conjugate requires lambda2 > 0");
  }
  check_dims(dual_block_vec, k, "dual block vector");
  const int p = static_cast<int>(dual_block_vec.size()) / k;
  double total = 0.0;
  for (int j = 0; j < p; ++j) {
    const double w = params.weights(j);
    if (std::isinf(w)) {
      continue;
    }
    const double excess =
        dual_block_vec.segment(static_cast<Eigen::Index>(j) * k, k).norm() - w * params.lambda1;
    if (excess > 0.0) {
      total += excess * excess / (2.0 * w * params.lambda2);
    }
  }
  return total;
}

bool dual_feasible(const Eigen::VectorXd& dual, const Eigen::VectorXd& labels) {
  for (Eigen::Index i = 0; i < dual.size(); ++i) {
    const double yv = labels(i) * dual(i);
    if (!(yv > -1.0 && yv < 0.0)) {
      return false;
    }
  }
  return true;
}

double h_conjugate(const Eigen::VectorXd& dual, const Eigen::VectorXd& labels) {
  if (dual.size() != labels.size()) {
    throw DataError("dual and labels length mismatch");
  }
  double total = 0.0;
  for (Eigen::Index i = 0; i < dual.size(); ++i) {
    const double yv = labels(i) * dual(i);
    if (!(yv > -1.0 && yv < 0.0)) {
      return kInf;  // dual-infeasible point
    }
    const double rho = -yv;
    total += (1.0 - rho) * clamped_log(1.0 - rho) + rho * clamped_log(rho);
  }
  return total;
}

void h_conjugate_derivatives(const Eigen::VectorXd& dual, const Eigen::VectorXd& labels,
                             Eigen::VectorXd& grad, Eigen::VectorXd& hess_diag) {
  const Eigen::Index n = dual.size();
  if (n != labels.size()) {
    throw DataError("dual and labels length mismatch");
  }
  grad.resize(n);
  hess_diag.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double yv = labels(i) * dual(i);
    if (!(yv > -1.0 && yv < 0.0)) {
      throw DataError("dual-infeasible point at index " + std::to_string(i));
    }
    const double rho = -yv;
    grad(i) = labels(i) * (clamped_log(1.0 - rho) - clamped_log(rho));
    const double rho_c = std::clamp(rho, kLogGuard, 1.0 - kLogGuard);
    hess_diag(i) = 1.0 / (rho_c * (1.0 - rho_c));
  }
}

PsiEval psi_eval(const Eigen::VectorXd& dual, const Eigen::VectorXd& labels,
                 const Eigen::VectorXd& multiplier, const ScoreMatrix& scores,
                 const PenaltyParams& params) {
  return psi_eval_with_product(dual, labels, multiplier, scores, params,
                               scores.data.transpose() * dual);
}

PsiEval psi_eval_with_product(const Eigen::VectorXd& dual, const Eigen::VectorXd& labels,
                              const Eigen::VectorXd& multiplier, const ScoreMatrix& scores,
                              const PenaltyParams& params, const Eigen::VectorXd& xtv) {
  const int k = scores.k;
  const int p = scores.p;
  if (multiplier.size() != scores.data.cols()) {
    throw DataError("multiplier length does not match score matrix");
  }

  PsiEval eval;
  const double hstar = h_conjugate(dual, labels);
  if (std::isinf(hstar)) {
    throw DataError("psi_eval called at a dual-infeasible point");
  }

  ActiveSetInfo& active = eval.active;
  active.T = multiplier - params.sigma * xtv;
  active.block_norms.resize(p);

  double prox_quad = 0.0;  // sum_j (1 + sigma w_j l2) ||prox(T_j)||^2
  Eigen::VectorXd prox_t = Eigen::VectorXd::Zero(active.T.size());
  for (int j = 0; j < p; ++j) {
    const auto block = active.T.segment(static_cast<Eigen::Index>(j) * k, k);
    const double norm = block.norm();
    active.block_norms(j) = norm;
    const double w = params.weights(j);
    const double threshold = params.sigma * w * params.lambda1;
    if (std::isinf(threshold) || !(norm > threshold * (1.0 + kThresholdSlack))) {
      continue;
    }
    active.indices.push_back(j);
    const double ridge = 1.0 + params.sigma * w * params.lambda2;
    const double scale = (1.0 - threshold / norm) / ridge;
    prox_t.segment(static_cast<Eigen::Index>(j) * k, k) = scale * block;
    prox_quad += ridge * scale * scale * norm * norm;

    // P_[j] = (1+s w l2)^{-1} ((1 - s w l1/||T_j||) I + (s w l1/||T_j||^3) T_j T_j^T)
    Eigen::MatrixXd pj = (threshold / (norm * norm * norm)) * (block * block.transpose());
    pj.diagonal().array() += 1.0 - threshold / norm;
    active.Q_blocks.push_back(pj / ridge);
  }

  eval.value = hstar + (prox_quad - multiplier.squaredNorm()) / (2.0 * params.sigma);

  Eigen::VectorXd hgrad, hhess;
  h_conjugate_derivatives(dual, labels, hgrad, hhess);
  eval.gradient = hgrad;
  for (int j : active.indices) {
    eval.gradient.noalias() -=
        scores.block(j) * prox_t.segment(static_cast<Eigen::Index>(j) * k, k);
  }
  return eval;
}

std::pair<double, double> objective_values(const Eigen::VectorXd& coefficients,
                                           const Eigen::VectorXd& dual,
                                           const Eigen::VectorXd& dual_block_vec,
                                           const ScoreMatrix& scores,
                                           const Eigen::VectorXd& labels,
                                           const PenaltyParams& params) {
  const double primal = logistic_loss(scores.data * coefficients, labels) +
                        penalty_value(coefficients, params, scores.k);
  const double dual_value =
      h_conjugate(dual, labels) + pi_conjugate(dual_block_vec, params, scores.k);
  return {primal, dual_value};
}

}  // namespace fsfc
