#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "fsfc/func_data.hpp"
#include "fsfc/solver.hpp"

namespace fsfc {

// Hyperparameters of the fitting pipeline. Defaults follow the reference
// configuration: k = 5, alpha = 0.2, 100 log-spaced path points, tol = 1e-4,
// mu = 0.2, 5 folds.
struct RunConfig {
  int k = 5;
  double alpha = 0.2;
  int n_lambda = 100;
  double tol = 1e-4;
  double mu = 0.2;
  int folds = 5;
  std::uint64_t seed = 0;
  int max_outer = 100;
  int max_inner = 50;
  int max_linesearch_halvings = 50;
  int threads = 0;  // 0: use hardware concurrency; FSFC_THREADS overrides
  // When set, cross-validation reuses the full-training FPC bases instead of
  // recomputing them inside each fold.
  bool cv_shared_basis = false;

  void validate() const;
  SolverConfig solver_config() const;
};

// lambda1 = c * lambda_max over a log-spaced c grid from 1 to 0.01;
// lambda2 = (1 - alpha) * lambda1.
struct LambdaGrid {
  double lambda_max = 0.0;
  Eigen::VectorXd c_values;
  double alpha = 0.2;

  int size() const { return static_cast<int>(c_values.size()); }
  double lambda1(int t) const { return c_values(t) * lambda_max; }
  double lambda2(int t) const { return (1.0 - alpha) * lambda1(t); }
};

// 0.5 max_j ||(X^T Y)_j||_2 / omega_j. Returns 0 for an all-zero X^T Y
// (degenerate problem).
double lambda_max(const ScoreMatrix& scores, const Eigen::VectorXd& labels,
                  const Eigen::VectorXd& weights);

LambdaGrid build_lambda_grid(const ScoreMatrix& scores, const Eigen::VectorXd& labels,
                             const Eigen::VectorXd& weights, double alpha, int n_points = 100);

struct PathEntry {
  double c = 0.0;
  double lambda1 = 0.0;
  double lambda2 = 0.0;
  Eigen::VectorXd B;
  std::vector<int> active;
  double kkt_residual = 0.0;
  bool converged = false;
  double train_accuracy = 0.0;
};

struct PathResult {
  std::vector<PathEntry> entries;
  Eigen::VectorXd cv_mean;  // empty until cross-validation fills it
  Eigen::VectorXd cv_sd;
  int selected_index = -1;
};

// Solves the full path in decreasing lambda order, warm-starting each fit
// from the previous solution. sigma follows the schedule
// sigma0 = 0.1 c / lambda_max, growth = max(min(5, 1 + 10 c), 1.1).
PathResult path_search(const ScoreMatrix& scores, const Eigen::VectorXd& labels,
                       const LambdaGrid& grid, const Eigen::VectorXd& weights,
                       const RunConfig& config);

// Fold assignment stratified by class. Instances are ordered by a
// content-derived key before the seeded shuffle, so the partition is invariant
// to the input row order.
std::vector<int> assign_folds(const CurvePanel& panel, const Eigen::VectorXd& labels, int folds,
                              std::uint64_t seed);

struct CvResult {
  Eigen::MatrixXd fold_accuracy;  // n_lambda x folds
  Eigen::VectorXd mean;
  Eigen::VectorXd sd;
  int selected_index = -1;
};

// Stratified 5-fold (by default) cross-validation over the lambda grid.
// Standardization and FPC bases are recomputed on each fold's training part
// unless config.cv_shared_basis is set. Selects the lambda maximizing mean
// accuracy, ties broken toward larger lambda1.
CvResult cross_validate(const CurvePanel& panel, const Eigen::VectorXd& labels,
                        const LambdaGrid& grid, const Eigen::VectorXd& weights,
                        const RunConfig& config);

struct RefitResult {
  Eigen::VectorXd B;           // pk, zeros outside the final active set
  Eigen::VectorXd omega;       // p, +inf for features excluded from the refit
  std::vector<int> active;     // final active set (subset of the first stage)
  bool refit_done = false;
  bool converged = false;
  double kkt_residual = 0.0;
  std::string warning;
  std::vector<OuterTraceEntry> trace;  // solver trace of the refit
};

// Adaptive second stage at the selected lambda: omega_j = sd_B / ||B~_j|| on
// the first-stage active set (sample sd of the active block norms), inactive
// features excluded from the design. Falls back to omega = 1 when the sd is
// degenerate (one active block, or all norms equal).
RefitResult adaptive_refit(const PathResult& path, const ScoreMatrix& scores,
                           const Eigen::VectorXd& labels, const LambdaGrid& grid,
                           const RunConfig& config);

struct FittedModel {
  TimeGrid grid;
  int k = 0;
  double alpha = 0.2;
  std::vector<std::string> feature_names;
  Eigen::MatrixXd mean_curves;  // p x m
  Eigen::MatrixXd sd_curves;    // p x m
  std::vector<FpcBasis> bases;  // p
  Eigen::VectorXd B;            // pk
  Eigen::VectorXd omega;        // p
  std::vector<int> active;
  double lambda1 = 0.0;
  double lambda2 = 0.0;
  // training metadata
  int trained_n = 0;
  int folds = 0;
  std::uint64_t seed = 0;
  bool cv_shared_basis = false;
  bool converged = true;

  int p() const { return static_cast<int>(bases.size()); }
  Eigen::VectorXd coefficient_block(int j) const {
    return B.segment(static_cast<Eigen::Index>(j) * k, k);
  }
};

struct Prediction {
  Eigen::VectorXd probability;  // P(Y = +1), loss-consistent sigmoid of the margin
  Eigen::VectorXd label;        // +1 when probability > 0.5, else -1
};

// Standardizes with the training curves, projects on the training bases and
// classifies. Features are matched by id when both sides carry names,
// positionally otherwise.
Prediction predict(const FittedModel& model, const CurvePanel& panel);

struct PipelineResult {
  FittedModel model;
  PathResult path;
  RefitResult refit;
};

// standardize -> FPC -> scores -> lambda grid -> cross-validated path
// (omega = 1) -> adaptive refit. Deterministic given config.seed.
PipelineResult fit_pipeline(const CurvePanel& panel, const Eigen::VectorXd& labels,
                            const RunConfig& config);

}  // namespace fsfc
