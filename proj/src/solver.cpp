#include "fsfc/solver.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include <string>

#include "fsfc/errors.hpp"
#include "fsfc/util.hpp"

namespace fsfc {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
// Below this linear prox factor the SMW inner matrix is effectively singular.
constexpr double kSmwLinFloor = 1e-10;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

double sum_block_norms(const Eigen::VectorXd& vec, int k) {
  double total = 0.0;
  for (Eigen::Index j = 0; j * k < vec.size(); ++j) {
    total += vec.segment(j * k, k).norm();
  }
  return total;
}

// Residual-based sanity check of a computed direction: ||H D + grad|| should
// be tiny relative to ||grad||.
double direction_residual(const ActiveSetInfo& active, const Eigen::VectorXd& grad,
                          const Eigen::VectorXd& hess_diag, const ScoreMatrix& scores,
                          double sigma, const Eigen::VectorXd& direction) {
  Eigen::VectorXd hd = hess_diag.cwiseProduct(direction);
  for (std::size_t q = 0; q < active.indices.size(); ++q) {
    const int j = active.indices[q];
    const auto xj = scores.block(j);
    hd.noalias() += sigma * (xj * (active.Q_blocks[q] * (xj.transpose() * direction)));
  }
  return (hd + grad).norm() / std::max(grad.norm(), 1e-300);
}

}  // namespace

void SolverConfig::validate() const {
  if (!(tol > 0.0)) {
    throw ConfigError("tol must be positive");
  }
  if (!(mu > 0.0 && mu < 0.5)) {
    throw ConfigError("mu must lie in (0, 0.5)");
  }
  if (!(sigma0 > 0.0)) {
    throw ConfigError("sigma0 must be positive");
  }
  if (!(sigma_growth >= 1.0)) {
    throw ConfigError("sigma_growth must be at least 1");
  }
  if (max_outer < 1 || max_inner < 1 || max_linesearch_halvings < 1) {
    throw ConfigError("iteration caps must be at least 1");
  }
}

Eigen::VectorXd z_update(const Eigen::VectorXd& dual, const Eigen::VectorXd& multiplier,
                         const ScoreMatrix& scores, const PenaltyParams& params) {
  const Eigen::VectorXd xtv = scores.data.transpose() * dual;
  const Eigen::VectorXd t = multiplier - params.sigma * xtv;
  return multiplier / params.sigma - xtv - prox_penalty(t, params, scores.k) / params.sigma;
}

double kkt_residual(const Eigen::VectorXd& dual, const Eigen::VectorXd& dual_block_vec,
                    const ScoreMatrix& scores) {
  const Eigen::VectorXd constraint = scores.data.transpose() * dual + dual_block_vec;
  const double numer = sum_block_norms(constraint, scores.k);
  const double denom = 1.0 + dual.norm() + sum_block_norms(dual_block_vec, scores.k);
  return numer / denom;
}

Eigen::VectorXd newton_direction(const ActiveSetInfo& active, const Eigen::VectorXd& grad_psi,
                                 const Eigen::VectorXd& hess_hstar_diag, const ScoreMatrix& scores,
                                 double sigma, const PenaltyParams& params, NewtonStats* stats) {
  const auto t0 = Clock::now();
  const Eigen::Index n = grad_psi.size();
  const int k = scores.k;
  const int r = static_cast<int>(active.indices.size());

  for (Eigen::Index i = 0; i < n; ++i) {
    if (!(hess_hstar_diag(i) > 0.0)) {
      throw DataError("nonpositive h* Hessian entry");
    }
  }

  const auto record = [&](bool smw) {
    if (stats != nullptr) {
      stats->seconds += seconds_since(t0);
      ++stats->solves;
      if (smw) {
        ++stats->smw_solves;
      } else {
        ++stats->direct_solves;
      }
    }
  };

  if (r == 0) {
    Eigen::VectorXd d = -grad_psi.cwiseQuotient(hess_hstar_diag);
    record(false);
    return d;
  }

  const Eigen::VectorXd neg_grad = -grad_psi;
  const Eigen::VectorXd hinv = hess_hstar_diag.cwiseInverse();

  // Gather X_J and the per-block prox factors.
  Eigen::MatrixXd xa(n, static_cast<Eigen::Index>(r) * k);
  bool smw_ok = static_cast<Eigen::Index>(r) * k < n;
  for (int q = 0; q < r; ++q) {
    const int j = active.indices[q];
    xa.middleCols(static_cast<Eigen::Index>(q) * k, k) = scores.block(j);
  }

  if (smw_ok) {
    // (sigma Q)^{-1} + X_J^T H^{-1} X_J, with
    // (sigma P_j)^{-1} = ridge/(sigma a) (I - (thr/||T_j||) u u^T), u = T_j/||T_j||.
    const Eigen::MatrixXd xi = hinv.asDiagonal() * xa;
    Eigen::MatrixXd inner = xa.transpose() * xi;
    for (int q = 0; q < r && smw_ok; ++q) {
      const int j = active.indices[q];
      const double w = params.weights(j);
      const double norm = active.block_norms(j);
      const double thr = sigma * w * params.lambda1;
      const double ridge = 1.0 + sigma * w * params.lambda2;
      const double lin = 1.0 - thr / norm;
      if (!(lin > kSmwLinFloor)) {
        smw_ok = false;
        break;
      }
      const Eigen::VectorXd u = active.T.segment(static_cast<Eigen::Index>(j) * k, k) / norm;
      const double scale = ridge / (sigma * lin);
      auto blk = inner.block(static_cast<Eigen::Index>(q) * k, static_cast<Eigen::Index>(q) * k,
                             k, k);
      blk.noalias() -= (scale * thr / norm) * (u * u.transpose());
      blk.diagonal().array() += scale;
    }
    if (smw_ok) {
      Eigen::LDLT<Eigen::MatrixXd> ldlt(inner);
      if (ldlt.info() == Eigen::Success) {
        const Eigen::VectorXd u0 = hinv.cwiseProduct(neg_grad);
        Eigen::VectorXd d = u0 - xi * ldlt.solve(xa.transpose() * u0);
        if (direction_residual(active, grad_psi, hess_hstar_diag, scores, sigma, d) < 1e-6) {
          record(true);
          return d;
        }
      }
    }
  }

  // Direct n x n route. Each P_j factors as G_j G_j^T with
  // G_j = [sqrt(a/ridge) I | sqrt(b/ridge) T_j], so the Hessian is a
  // symmetric rank update by W = X_J blockdiag(G_j).
  Eigen::MatrixXd w(n, static_cast<Eigen::Index>(r) * (k + 1));
  for (int q = 0; q < r; ++q) {
    const int j = active.indices[q];
    const double wj = params.weights(j);
    const double norm = active.block_norms(j);
    const double thr = sigma * wj * params.lambda1;
    const double ridge = 1.0 + sigma * wj * params.lambda2;
    const double lin = std::max(1.0 - thr / norm, 0.0);
    const auto xj = xa.middleCols(static_cast<Eigen::Index>(q) * k, k);
    const auto tj = active.T.segment(static_cast<Eigen::Index>(j) * k, k);
    w.middleCols(static_cast<Eigen::Index>(q) * (k + 1), k) = std::sqrt(lin / ridge) * xj;
    w.col(static_cast<Eigen::Index>(q) * (k + 1) + k).noalias() =
        std::sqrt(thr / ridge) / (norm * std::sqrt(norm)) * (xj * tj);
  }
  Eigen::MatrixXd h = Eigen::MatrixXd::Zero(n, n);
  h.diagonal() = hess_hstar_diag;
  h.selfadjointView<Eigen::Lower>().rankUpdate(w, sigma);
  Eigen::LDLT<Eigen::MatrixXd> ldlt(h);
  if (ldlt.info() == Eigen::Success) {
    Eigen::VectorXd d = ldlt.solve(neg_grad);
    if (direction_residual(active, grad_psi, hess_hstar_diag, scores, sigma, d) < 1e-6) {
      record(false);
      return d;
    }
  }
  throw std::runtime_error("Newton system singular");
}

InnerResult inner_solve(SolverState& state, const ScoreMatrix& scores,
                        const Eigen::VectorXd& labels, const PenaltyParams& params,
                        const SolverConfig& config, NewtonStats* stats) {
  InnerResult result;
  const int k = scores.k;
  const double sigma = params.sigma;
  const double multiplier_sq = state.B.squaredNorm();
  result.xtv = scores.data.transpose() * state.V;

  for (int it = 0; it <= config.max_inner; ++it) {
    PsiEval eval = psi_eval_with_product(state.V, labels, state.B, scores, params, result.xtv);
    result.psi_trace.push_back(eval.value);

    // Stopping rule, both sides at the current iterate:
    // sum_j ||(X^T V + Zbar)_j|| = sum_j ||B_j - prox(T_j)|| / sigma.
    double constraint_sum = 0.0;
    for (int j = 0; j < scores.p; ++j) {
      const auto tj = eval.active.T.segment(static_cast<Eigen::Index>(j) * k, k);
      const auto bj = state.B.segment(static_cast<Eigen::Index>(j) * k, k);
      constraint_sum +=
          (bj - prox_group(tj, sigma, params.weights(j), params.lambda1, params.lambda2)).norm();
    }
    constraint_sum /= sigma;
    if (eval.gradient.norm() <= 2.0 * std::sqrt(sigma) * constraint_sum) {
      result.criterion_met = true;
      break;
    }
    if (it == config.max_inner) {
      break;  // cap reached; outer loop continues and sigma grows
    }

    Eigen::VectorXd hgrad, hhess;
    h_conjugate_derivatives(state.V, labels, hgrad, hhess);
    const Eigen::VectorXd direction =
        newton_direction(eval.active, eval.gradient, hhess, scores, sigma, params, stats);
    const double slope = eval.gradient.dot(direction);
    if (!(slope < 0.0)) {
      throw std::runtime_error("Newton direction is not a descent direction");
    }

    // Trial evaluations reuse T(s) = T - s sigma X^T D; no further products
    // with X are needed inside the line search.
    const Eigen::VectorXd xtd = scores.data.transpose() * direction;
    const auto psi_trial = [&](double s) -> double {
      const Eigen::VectorXd v_trial = state.V + s * direction;
      const double hstar = h_conjugate(v_trial, labels);
      if (std::isinf(hstar)) {
        return kInf;
      }
      const Eigen::VectorXd t_trial = eval.active.T - (s * sigma) * xtd;
      double prox_quad = 0.0;
      for (int j = 0; j < scores.p; ++j) {
        const double w = params.weights(j);
        const double thr = sigma * w * params.lambda1;
        const double norm = t_trial.segment(static_cast<Eigen::Index>(j) * k, k).norm();
        if (std::isinf(thr) || !(norm > thr * (1.0 + kThresholdSlack))) {
          continue;
        }
        const double ridge = 1.0 + sigma * w * params.lambda2;
        const double scale = (1.0 - thr / norm) / ridge;
        prox_quad += ridge * scale * scale * norm * norm;
      }
      return hstar + (prox_quad - multiplier_sq) / (2.0 * sigma);
    };

    const LineSearchResult ls = armijo_backtrack(psi_trial, eval.value, slope, config.mu,
                                                 config.max_linesearch_halvings);
    if (!ls.ok) {
      result.stalled = true;
      break;
    }
    state.V += ls.step * direction;
    result.xtv += ls.step * xtd;
    if (!dual_feasible(state.V, labels)) {
      throw std::logic_error("accepted Newton step left the dual domain");
    }
    ++result.newton_steps;
  }

  const Eigen::VectorXd t_final = state.B - sigma * result.xtv;
  state.Z = state.B / sigma - result.xtv - prox_penalty(t_final, params, k) / sigma;
  return result;
}

SolveReport dal_fit(const ScoreMatrix& scores, const Eigen::VectorXd& labels, double lambda1,
                    double lambda2, const Eigen::VectorXd& weights,
                    const std::optional<SolverState>& init, const SolverConfig& config) {
  const auto t0 = Clock::now();
  config.validate();
  if (!(lambda1 > 0.0) || !(lambda2 > 0.0)) {
    throw ConfigError("dal_fit requires lambda1 > 0 and lambda2 > 0");
  }
  if (labels.size() != scores.n) {
    throw DataError("labels length does not match score matrix");
  }
  for (Eigen::Index i = 0; i < labels.size(); ++i) {
    if (labels(i) != 1.0 && labels(i) != -1.0) {
      throw DataError("labels must be -1 or 1");
    }
  }

  const int k = scores.k;
  PenaltyParams params;
  params.lambda1 = lambda1;
  params.lambda2 = lambda2;
  params.sigma = config.sigma0;
  params.weights = weights;
  params.validate(scores.p);

  SolverState state;
  if (init.has_value() && init->V.size() == labels.size() &&
      init->B.size() == scores.data.cols() && dual_feasible(init->V, labels)) {
    state.V = init->V;
    state.B = init->B;
  } else {
    state.V = -0.5 * labels;
    state.B = Eigen::VectorXd::Zero(scores.data.cols());
  }
  state.sigma = config.sigma0;

  SolveReport report;
  NewtonStats stats;
  double sigma = config.sigma0;
  double best_kkt = std::numeric_limits<double>::infinity();
  Eigen::VectorXd best_v, best_z, best_b;

  for (int outer = 1; outer <= config.max_outer; ++outer) {
    params.sigma = sigma;
    state.sigma = sigma;
    const InnerResult inner = inner_solve(state, scores, labels, params, config, &stats);
    report.inner_iterations += inner.newton_steps;
    report.outer_iterations = outer;
    state.outer_iter = outer;
    state.inner_iter_total += inner.newton_steps;
    state.newton_iter_total += inner.newton_steps;

    const double kkt = kkt_residual(state.V, state.Z, scores);

    // Multiplier update: B - sigma (X^T V + Zbar) = prox_{sigma pi}(B - sigma X^T V),
    // which keeps inactive blocks exactly zero.
    const Eigen::VectorXd t = state.B - sigma * inner.xtv;
    state.B = prox_penalty(t, params, k);

    if (kkt < best_kkt) {
      best_kkt = kkt;
      best_v = state.V;
      best_z = state.Z;
      best_b = state.B;
    }

    OuterTraceEntry entry;
    entry.outer = outer;
    entry.inner_steps = inner.newton_steps;
    entry.sigma = sigma;
    entry.kkt = kkt;
    entry.psi = inner.psi_trace.empty() ? 0.0 : inner.psi_trace.back();
    for (int j = 0; j < scores.p; ++j) {
      if (state.B.segment(static_cast<Eigen::Index>(j) * k, k).norm() > 0.0) {
        ++entry.active_count;
      }
    }
    report.trace.push_back(entry);

    if (inner.stalled) {
      report.status = SolveStatus::kLineSearchStalled;
      break;
    }
    if (kkt < config.tol) {
      report.converged = true;
      report.status = SolveStatus::kConverged;
      break;
    }
    sigma = std::min(sigma * config.sigma_growth, config.sigma_max);
  }

  // The best iterate by KKT residual; at convergence this is the final one.
  report.kkt_residual = best_kkt;
  report.B = std::move(best_b);
  report.V = std::move(best_v);
  report.Z = std::move(best_z);
  report.newton_iterations = report.inner_iterations;
  for (int j = 0; j < scores.p; ++j) {
    if (report.B.segment(static_cast<Eigen::Index>(j) * k, k).norm() > 0.0) {
      report.active_features.push_back(j);
    }
  }
  report.newton_solve_seconds = stats.seconds;
  report.newton_solve_count = stats.solves;
  report.wall_seconds = seconds_since(t0);
  return report;
}

}  // namespace fsfc
