#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "fsfc/func_data.hpp"
#include "fsfc/model_select.hpp"

namespace fsfc {

// Matern covariance parameters. Only half-integer smoothness is supported
// (closed exponential-polynomial form); the default nu = 3.5.
struct MaternParams {
  double eta2 = 1.0;  // pointwise variance
  double ell = 0.25;  // range
  double nu = 3.5;    // smoothness

  void validate() const;
};

double matern_cov(double t, double s, const MaternParams& params);

Eigen::MatrixXd matern_gram(const TimeGrid& grid, const MaternParams& params);

// count independent zero-mean GP draws on the grid, one per row. Cholesky
// with an escalating jitter ladder (1e-10 eta2 up to 1e-4 eta2).
Eigen::MatrixXd sample_gp(const TimeGrid& grid, const MaternParams& params, int count,
                          std::uint64_t seed);

struct ScenarioSpec {
  int n = 0;
  int p = 0;
  int p0 = 0;
  int grid_size = 100;
  int n_test = 0;  // 0: defaults to n / 3
  std::uint64_t seed = 0;

  int effective_n_test() const { return n_test > 0 ? n_test : std::max(1, n / 3); }
  void validate() const;
};

struct ScenarioData {
  CurvePanel train;
  CurvePanel test;
  Eigen::VectorXd y_train;
  Eigen::VectorXd y_test;
  Eigen::MatrixXd true_coefficients;  // p x m, zero rows outside the support
  std::vector<int> support;
};

// Draws features and the p0 nonzero coefficient curves from the Matern GP,
// computes margins by full quadrature of the true functional inner products
// on the raw (unstandardized) features, and samples labels from the
// loss-consistent sigmoid. Panels are returned raw; the fitting pipeline
// standardizes.
ScenarioData generate_scenario(const ScenarioSpec& spec, const MaternParams& matern = {});

// recall = |selected ∩ truth| / |truth|; precision = |selected ∩ truth| /
// |selected| with precision 0 for an empty selection.
std::pair<double, double> selection_metrics(const std::vector<int>& selected,
                                            const std::vector<int>& truth);

struct ReplicationRow {
  int rep = 0;
  std::uint64_t seed = 0;
  bool ok = false;
  double precision = 0.0;
  double recall = 0.0;
  double train_accuracy = 0.0;
  double test_accuracy = 0.0;
  double selected_lambda1 = 0.0;
  int active_count = 0;
  double wall_seconds = 0.0;
  std::string error;
};

struct MetricSummary {
  std::string name;
  int count = 0;
  double mean = 0.0;
  double sd = 0.0;
  double min = 0.0;
  double median = 0.0;
  double max = 0.0;
};

struct BenchResult {
  std::vector<ReplicationRow> rows;
  int failed = 0;
};

BenchResult run_replications(const ScenarioSpec& spec, int reps, const RunConfig& config,
                             const MaternParams& matern = {});

// Aggregates of the successful rows: precision, recall, train/test accuracy,
// wall seconds.
std::vector<MetricSummary> summarize(const BenchResult& bench);

}  // namespace fsfc
