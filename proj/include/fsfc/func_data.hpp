#pragma once

#include <Eigen/Dense>
#include <string>
#include <utility>
#include <vector>

namespace fsfc {

// Shared evaluation grid on [0, 1] with trapezoid quadrature weights.
// Points are strictly increasing, first 0 and last 1; weights are positive
// and sum to the domain length.
struct TimeGrid {
  Eigen::VectorXd points;
  Eigen::VectorXd weights;

  static TimeGrid uniform(int m);
  static TimeGrid from_points(Eigen::VectorXd pts);

  int size() const { return static_cast<int>(points.size()); }
  bool approx_equals(const TimeGrid& other, double tol = 1e-12) const;
};

// A functional dataset: p features, each observed as n curves on a common grid.
// features[j] is the n x m matrix of evaluations of feature j.
struct CurvePanel {
  TimeGrid grid;
  std::vector<Eigen::MatrixXd> features;
  std::vector<std::string> instance_ids;  // optional; size n when present
  std::vector<std::string> feature_ids;   // optional; size p when present

  int n() const { return features.empty() ? 0 : static_cast<int>(features[0].rows()); }
  int p() const { return static_cast<int>(features.size()); }
  int m() const { return grid.size(); }

  // Throws DataError on inconsistent dimensions or non-finite values.
  void validate() const;
};

struct StandardizeResult {
  CurvePanel panel;
  Eigen::MatrixXd mean;  // p x m pointwise means
  Eigen::MatrixXd sd;    // p x m pointwise sds, floored entries replaced by 1
  // (feature, grid point) pairs where the sd fell below the floor.
  std::vector<std::pair<int, int>> degenerate;
};

inline constexpr double kSdFloor = 1e-10;

// Pointwise standardization: at every grid point each feature gets mean 0 and
// sample sd 1 across instances. Points with sd below kSdFloor keep their
// centering and get sd replaced by 1 (flagged in `degenerate`).
StandardizeResult standardize_panel(const CurvePanel& panel);

// Standardize a feature slab (n x m) in place with given statistics; used to
// apply training statistics to held-out data.
Eigen::MatrixXd standardize_with(const Eigen::MatrixXd& slab,
                                 const Eigen::VectorXd& mean,
                                 const Eigen::VectorXd& sd);

CurvePanel standardize_with(const CurvePanel& panel,
                            const Eigen::MatrixXd& mean,
                            const Eigen::MatrixXd& sd);

// Functional principal components of one feature: k eigenfunctions on the
// grid, orthonormal under trapezoid quadrature, eigenvalues descending.
struct FpcBasis {
  int feature_index = 0;
  int k = 0;
  TimeGrid grid;
  Eigen::MatrixXd eigenfunctions;  // k x m, row s is e_s on the grid
  Eigen::VectorXd eigenvalues;     // k, nonincreasing, nonnegative
  double variance_explained = 0.0;
  bool rank_deficient = false;     // fewer than k positive eigenvalues
};

// Discretized Karhunen-Loeve: symmetric eigendecomposition of
// W^{1/2} C W^{1/2} with C the sample covariance of the curves on the grid,
// back-transformed by W^{-1/2}. Signs are fixed so the largest-magnitude
// entry of each eigenfunction is positive.
FpcBasis compute_fpc(const CurvePanel& panel, int feature, int k);

std::vector<FpcBasis> compute_all_fpc(const CurvePanel& panel, int k, int threads = 1);

// FPC score design matrix, block layout [X_[1] | ... | X_[p]] with k columns
// per feature.
struct ScoreMatrix {
  int n = 0;
  int p = 0;
  int k = 0;
  Eigen::MatrixXd data;  // n x (p*k)

  auto block(int j) { return data.middleCols(static_cast<Eigen::Index>(j) * k, k); }
  auto block(int j) const { return data.middleCols(static_cast<Eigen::Index>(j) * k, k); }
};

// Scores X_[j](i,s) = <curve(i,j), e^j_s> under trapezoid quadrature. The
// bases must cover all features of the panel, share k, and share the grid.
ScoreMatrix compute_scores(const CurvePanel& panel, const std::vector<FpcBasis>& bases);

// Scores of a single feature slab (n x m) against one basis.
Eigen::MatrixXd feature_scores(const Eigen::MatrixXd& slab, const FpcBasis& basis);

// Coefficient curve e^j(t) . B_j evaluated at all grid points.
Eigen::VectorXd reconstruct_coefficient_curve(const Eigen::VectorXd& coefficients,
                                              const FpcBasis& basis);

}  // namespace fsfc
