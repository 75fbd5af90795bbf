#include "fsfc/func_data.hpp"

#include <cmath>
#include <string>

#include "fsfc/errors.hpp"
#include "fsfc/util.hpp"

namespace fsfc {

namespace {

Eigen::VectorXd trapezoid_weights(const Eigen::VectorXd& pts) {
  const int m = static_cast<int>(pts.size());
  Eigen::VectorXd w(m);
  w(0) = 0.5 * (pts(1) - pts(0));
  for (int g = 1; g + 1 < m; ++g) {
    w(g) = 0.5 * (pts(g + 1) - pts(g - 1));
  }
  w(m - 1) = 0.5 * (pts(m - 1) - pts(m - 2));
  return w;
}

}  // namespace

TimeGrid TimeGrid::uniform(int m) {
  if (m < 2) {
    throw ConfigError("time grid needs at least 2 points, got " + std::to_string(m));
  }
  Eigen::VectorXd pts = Eigen::VectorXd::LinSpaced(m, 0.0, 1.0);
  pts(0) = 0.0;
  pts(m - 1) = 1.0;
  return from_points(std::move(pts));
}

TimeGrid TimeGrid::from_points(Eigen::VectorXd pts) {
  const int m = static_cast<int>(pts.size());
  if (m < 2) {
    throw DataError("time grid needs at least 2 points, got " + std::to_string(m));
  }
  if (pts(0) != 0.0 || pts(m - 1) != 1.0) {
    throw DataError("time grid must start at 0 and end at 1");
  }
  for (int g = 1; g < m; ++g) {
    if (!(pts(g) > pts(g - 1))) {
      throw DataError("time grid points must be strictly increasing (violated at index " +
                      std::to_string(g) + ")");
    }
  }
  TimeGrid grid;
  grid.weights = trapezoid_weights(pts);
  grid.points = std::move(pts);
  return grid;
}

bool TimeGrid::approx_equals(const TimeGrid& other, double tol) const {
  if (points.size() != other.points.size()) {
    return false;
  }
  return (points - other.points).lpNorm<Eigen::Infinity>() <= tol;
}

void CurvePanel::validate() const {
  const int mm = m();
  for (int j = 0; j < p(); ++j) {
    if (features[j].cols() != mm) {
      throw DataError("feature " + std::to_string(j) + " has " +
                      std::to_string(features[j].cols()) + " grid columns, expected " +
                      std::to_string(mm));
    }
    if (features[j].rows() != features[0].rows()) {
      throw DataError("feature " + std::to_string(j) + " has inconsistent instance count");
    }
    if (!features[j].allFinite()) {
      throw DataError("feature " + std::to_string(j) + " contains non-finite values");
    }
  }
  if (!instance_ids.empty() && static_cast<int>(instance_ids.size()) != n()) {
    throw DataError("instance id count does not match panel");
  }
  if (!feature_ids.empty() && static_cast<int>(feature_ids.size()) != p()) {
    throw DataError("feature id count does not match panel");
  }
}

StandardizeResult standardize_panel(const CurvePanel& panel) {
  const int n = panel.n();
  const int p = panel.p();
  const int m = panel.m();
  if (n < 2) {
    throw DataError("standardization needs at least 2 instances, got " + std::to_string(n));
  }
  StandardizeResult out;
  out.panel.grid = panel.grid;
  out.panel.instance_ids = panel.instance_ids;
  out.panel.feature_ids = panel.feature_ids;
  out.panel.features.resize(static_cast<std::size_t>(p));
  out.mean.resize(p, m);
  out.sd.resize(p, m);
  for (int j = 0; j < p; ++j) {
    const Eigen::MatrixXd& slab = panel.features[j];
    Eigen::RowVectorXd mu = slab.colwise().mean();
    Eigen::RowVectorXd var =
        (slab.rowwise() - mu).colwise().squaredNorm() / static_cast<double>(n - 1);
    Eigen::RowVectorXd sd(m);
    for (int g = 0; g < m; ++g) {
      const double s = std::sqrt(var(g));
      if (s < kSdFloor) {
        sd(g) = 1.0;
        out.degenerate.emplace_back(j, g);
      } else {
        sd(g) = s;
      }
    }
    out.mean.row(j) = mu;
    out.sd.row(j) = sd;
    out.panel.features[j] =
        (slab.rowwise() - mu).array().rowwise() / sd.array();
  }
  return out;
}

Eigen::MatrixXd standardize_with(const Eigen::MatrixXd& slab,
                                 const Eigen::VectorXd& mean,
                                 const Eigen::VectorXd& sd) {
  return (slab.rowwise() - mean.transpose()).array().rowwise() /
         sd.transpose().array();
}

CurvePanel standardize_with(const CurvePanel& panel,
                            const Eigen::MatrixXd& mean,
                            const Eigen::MatrixXd& sd) {
  if (mean.rows() != panel.p() || mean.cols() != panel.m() || sd.rows() != mean.rows() ||
      sd.cols() != mean.cols()) {
    throw DataError("standardization statistics do not match panel dimensions");
  }
  CurvePanel out;
  out.grid = panel.grid;
  out.instance_ids = panel.instance_ids;
  out.feature_ids = panel.feature_ids;
  out.features.reserve(panel.features.size());
  for (int j = 0; j < panel.p(); ++j) {
    out.features.push_back(standardize_with(panel.features[j], mean.row(j), sd.row(j)));
  }
  return out;
}

FpcBasis compute_fpc(const CurvePanel& panel, int feature, int k) {
  const int n = panel.n();
  const int m = panel.m();
  if (feature < 0 || feature >= panel.p()) {
    throw DataError("feature index " + std::to_string(feature) + " out of range");
  }
  if (k < 1 || k > std::min(n, m)) {
    throw ConfigError("k = " + std::to_string(k) + " must lie in [1, min(n, m)] = [1, " +
                      std::to_string(std::min(n, m)) + "]");
  }
  if (n < 2) {
    throw DataError("FPC estimation needs at least 2 instances");
  }

  const Eigen::MatrixXd& slab = panel.features[feature];
  const Eigen::VectorXd sqw = panel.grid.weights.array().sqrt();

  // Weighted, centered data: rows of (X_i - mean) scaled by sqrt(w) per column,
  // so that C_w = W^{1/2} C W^{1/2} = A^T A / (n - 1).
  Eigen::RowVectorXd mu = slab.colwise().mean();
  Eigen::MatrixXd a = (slab.rowwise() - mu).array().rowwise() * sqw.transpose().array();
  Eigen::MatrixXd cw(m, m);
  cw.setZero();
  cw.selfadjointView<Eigen::Lower>().rankUpdate(a.transpose(), 1.0 / static_cast<double>(n - 1));

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cw);
  if (eig.info() != Eigen::Success) {
    throw DataError("eigendecomposition failed for feature " + std::to_string(feature));
  }

  // Eigen reports ascending order; take the top k, clamp round-off negatives.
  FpcBasis basis;
  basis.feature_index = feature;
  basis.k = k;
  basis.grid = panel.grid;
  basis.eigenfunctions.resize(k, m);
  basis.eigenvalues.resize(k);

  double total = 0.0;
  for (int s = 0; s < m; ++s) {
    total += std::max(eig.eigenvalues()(s), 0.0);
  }
  double captured = 0.0;
  const double rank_tol = std::max(eig.eigenvalues()(m - 1), 0.0) * 1e-12;
  for (int s = 0; s < k; ++s) {
    const int src = m - 1 - s;
    const double lambda = std::max(eig.eigenvalues()(src), 0.0);
    basis.eigenvalues(s) = lambda;
    captured += lambda;
    if (lambda <= rank_tol) {
      basis.rank_deficient = true;
    }
    Eigen::VectorXd e = eig.eigenvectors().col(src).array() / sqw.array();
    int imax = 0;
    e.cwiseAbs().maxCoeff(&imax);
    if (e(imax) < 0.0) {
      e = -e;
    }
    basis.eigenfunctions.row(s) = e.transpose();
  }
  basis.variance_explained = total > 0.0 ? captured / total : 0.0;
  if (total <= 0.0) {
    basis.rank_deficient = true;
  }
  return basis;
}

std::vector<FpcBasis> compute_all_fpc(const CurvePanel& panel, int k, int threads) {
  std::vector<FpcBasis> bases(static_cast<std::size_t>(panel.p()));
  parallel_for(panel.p(), threads,
               [&](int j) { bases[static_cast<std::size_t>(j)] = compute_fpc(panel, j, k); });
  return bases;
}

Eigen::MatrixXd feature_scores(const Eigen::MatrixXd& slab, const FpcBasis& basis) {
  // <curve, e_s> = sum_g w_g curve(g) e_s(g)
  return slab * basis.grid.weights.asDiagonal() * basis.eigenfunctions.transpose();
}

ScoreMatrix compute_scores(const CurvePanel& panel, const std::vector<FpcBasis>& bases) {
  const int p = panel.p();
  if (static_cast<int>(bases.size()) != p) {
    throw DataError("basis count " + std::to_string(bases.size()) +
                    " does not cover the panel's " + std::to_string(p) + " features");
  }
  const int k = bases.empty() ? 0 : bases[0].k;
  ScoreMatrix scores;
  scores.n = panel.n();
  scores.p = p;
  scores.k = k;
  scores.data.resize(scores.n, static_cast<Eigen::Index>(p) * k);
  for (int j = 0; j < p; ++j) {
    if (bases[j].k != k) {
      throw DataError("all bases must share k; feature " + std::to_string(j) + " has k = " +
                      std::to_string(bases[j].k));
    }
    if (!bases[j].grid.approx_equals(panel.grid)) {
      throw DataError("basis grid mismatch for feature " + std::to_string(j));
    }
    scores.block(j) = feature_scores(panel.features[j], bases[j]);
  }
  return scores;
}

Eigen::VectorXd reconstruct_coefficient_curve(const Eigen::VectorXd& coefficients,
                                              const FpcBasis& basis) {
  if (coefficients.size() != basis.k) {
    throw DataError("coefficient vector length " + std::to_string(coefficients.size()) +
                    " does not match basis k = " + std::to_string(basis.k));
  }
  return basis.eigenfunctions.transpose() * coefficients;
}

}  // namespace fsfc
