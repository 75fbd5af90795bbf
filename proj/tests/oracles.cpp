#include "oracles.hpp"

#include <cmath>
#include <limits>

#include "fsfc/util.hpp"

namespace fsfc::oracle {

namespace {

constexpr double kGolden = 0.6180339887498949;

// Golden-section minimizer of a unimodal function on [lo, hi].
double golden_min(const std::function<double(double)>& f, double lo, double hi, int iters = 200) {
  double a = lo;
  double b = hi;
  double x1 = b - kGolden * (b - a);
  double x2 = a + kGolden * (b - a);
  double f1 = f(x1);
  double f2 = f(x2);
  for (int i = 0; i < iters && b - a > 1e-15 * (1.0 + std::abs(a) + std::abs(b)); ++i) {
    if (f1 < f2) {
      b = x2;
      x2 = x1;
      f2 = f1;
      x1 = b - kGolden * (b - a);
      f1 = f(x1);
    } else {
      a = x1;
      x1 = x2;
      f1 = f2;
      x2 = a + kGolden * (b - a);
      f2 = f(x2);
    }
  }
  return 0.5 * (a + b);
}

}  // namespace

double h_conjugate_sup(double y, double v, int grid_points) {
  const auto g = [&](double b) { return b * v - softplus(-y * b); };
  const double lo = -30.0;
  const double hi = 30.0;
  const double step = (hi - lo) / static_cast<double>(grid_points - 1);
  double best = -std::numeric_limits<double>::infinity();
  double best_b = lo;
  for (int i = 0; i < grid_points; ++i) {
    const double b = lo + step * static_cast<double>(i);
    const double val = g(b);
    if (val > best) {
      best = val;
      best_b = b;
    }
  }
  // Local refinement around the grid maximum (g is concave).
  const double refined = golden_min([&](double b) { return -g(b); },
                                    std::max(lo, best_b - 2.0 * step),
                                    std::min(hi, best_b + 2.0 * step));
  return std::max(best, g(refined));
}

Eigen::VectorXd prox_min(const Eigen::VectorXd& x, double sigma, double omega, double lambda1,
                         double lambda2) {
  const double norm = x.norm();
  if (norm == 0.0) {
    return Eigen::VectorXd::Zero(x.size());
  }
  // The objective depends on z only through ||z|| and <z, x>, so the minimizer
  // is rho x/||x|| with rho in [0, ||x||].
  const auto g = [&](double rho) {
    return 0.5 * (rho - norm) * (rho - norm) +
           sigma * omega * (lambda1 * rho + 0.5 * lambda2 * rho * rho);
  };
  double rho = golden_min(g, 0.0, norm);
  if (g(0.0) <= g(rho)) {
    rho = 0.0;
  }
  return (rho / norm) * x;
}

double pi_conjugate_sup(const Eigen::VectorXd& z, double omega, double lambda1, double lambda2) {
  const double norm = z.norm();
  const auto g = [&](double rho) {
    return rho * norm - omega * (lambda1 * rho + 0.5 * lambda2 * rho * rho);
  };
  // Concave in rho >= 0; bracket generously and take the best of a coarse
  // grid and a refinement.
  const double hi = std::max(1.0, 4.0 * norm / (omega * lambda2));
  double best = 0.0;
  for (int i = 0; i <= 100000; ++i) {
    best = std::max(best, g(hi * static_cast<double>(i) / 100000.0));
  }
  const double refined = golden_min([&](double rho) { return -g(rho); }, 0.0, hi);
  return std::max(best, g(refined));
}

Eigen::VectorXd prox_pi_conjugate_over_sigma(const Eigen::VectorXd& w, double sigma, double omega,
                                             double lambda1, double lambda2) {
  const double norm = w.norm();
  const double radius = omega * lambda1;
  if (norm <= radius || norm == 0.0) {
    return w;
  }
  const double c = 1.0 / (2.0 * sigma * omega * lambda2);
  const double rho = (norm + 2.0 * c * radius) / (1.0 + 2.0 * c);
  return (rho / norm) * w;
}

Eigen::VectorXd fd_gradient(const std::function<double(const Eigen::VectorXd&)>& f,
                            const Eigen::VectorXd& x, double h) {
  Eigen::VectorXd grad(x.size());
  Eigen::VectorXd probe = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    probe(i) = x(i) + h;
    const double up = f(probe);
    probe(i) = x(i) - h;
    const double down = f(probe);
    probe(i) = x(i);
    grad(i) = (up - down) / (2.0 * h);
  }
  return grad;
}

double augmented_lagrangian(const Eigen::VectorXd& V, const Eigen::VectorXd& Z,
                            const Eigen::VectorXd& B, const ScoreMatrix& X,
                            const Eigen::VectorXd& Y, const PenaltyParams& params) {
  const Eigen::VectorXd constraint = X.data.transpose() * V + Z;
  double value = h_conjugate(V, Y) + pi_conjugate(Z, params, X.k);
  for (int j = 0; j < X.p; ++j) {
    const auto cj = constraint.segment(static_cast<Eigen::Index>(j) * X.k, X.k);
    const auto bj = B.segment(static_cast<Eigen::Index>(j) * X.k, X.k);
    value += -bj.dot(cj) + 0.5 * params.sigma * cj.squaredNorm();
  }
  return value;
}

Eigen::VectorXd z_argmin(const Eigen::VectorXd& V, const Eigen::VectorXd& B, const ScoreMatrix& X,
                         const Eigen::VectorXd& Y, const PenaltyParams& params, double grad_tol) {
  const Eigen::VectorXd xtv = X.data.transpose() * V;
  const int k = X.k;
  Eigen::VectorXd z = Eigen::VectorXd::Zero(xtv.size());

  const auto grad_at = [&](const Eigen::VectorXd& zz) {
    Eigen::VectorXd grad = params.sigma * (xtv + zz) - B;
    for (int j = 0; j < X.p; ++j) {
      const auto zj = zz.segment(static_cast<Eigen::Index>(j) * k, k);
      const double norm = zj.norm();
      const double excess = norm - params.weights(j) * params.lambda1;
      if (excess > 0.0 && norm > 0.0) {
        grad.segment(static_cast<Eigen::Index>(j) * k, k) +=
            excess / (params.weights(j) * params.lambda2 * norm) * zj;
      }
    }
    return grad;
  };
  const auto value_at = [&](const Eigen::VectorXd& zz) {
    double value = pi_conjugate(zz, params, k);
    const Eigen::VectorXd c = xtv + zz;
    value += 0.5 * params.sigma * c.squaredNorm() - B.dot(c);
    return value;
  };

  double step = 1.0 / params.sigma;
  double value = value_at(z);
  for (long it = 0; it < 200000; ++it) {
    const Eigen::VectorXd grad = grad_at(z);
    if (grad.norm() <= grad_tol) {
      break;
    }
    Eigen::VectorXd trial = z - step * grad;
    double trial_value = value_at(trial);
    int backtracks = 0;
    while (trial_value > value - 0.5 * step * grad.squaredNorm() && backtracks < 60) {
      step *= 0.5;
      trial = z - step * grad;
      trial_value = value_at(trial);
      ++backtracks;
    }
    z = trial;
    value = trial_value;
    step *= 1.2;
  }
  return z;
}

EigOracle weighted_cov_eig(const Eigen::MatrixXd& slab, const TimeGrid& grid, int k) {
  const Eigen::Index n = slab.rows();
  const Eigen::Index m = slab.cols();
  const Eigen::RowVectorXd mu = slab.colwise().mean();
  const Eigen::MatrixXd centered = slab.rowwise() - mu;
  const Eigen::MatrixXd cov = centered.transpose() * centered / static_cast<double>(n - 1);
  const Eigen::MatrixXd cw = cov * grid.weights.asDiagonal();

  Eigen::EigenSolver<Eigen::MatrixXd> eig(cw);
  std::vector<std::pair<double, Eigen::Index>> order;
  for (Eigen::Index i = 0; i < m; ++i) {
    order.emplace_back(eig.eigenvalues()(i).real(), i);
  }
  std::sort(order.begin(), order.end(),
            [](const auto& a, const auto& b) { return a.first > b.first; });

  EigOracle out;
  out.eigenvalues.resize(k);
  out.eigenfunctions.resize(k, m);
  for (int s = 0; s < k; ++s) {
    out.eigenvalues(s) = order[static_cast<std::size_t>(s)].first;
    Eigen::VectorXd e = eig.eigenvectors().col(order[static_cast<std::size_t>(s)].second).real();
    const double norm = std::sqrt(e.dot(grid.weights.cwiseProduct(e)));
    e /= norm;
    int imax = 0;
    e.cwiseAbs().maxCoeff(&imax);
    if (e(imax) < 0.0) {
      e = -e;
    }
    out.eigenfunctions.row(s) = e.transpose();
  }
  return out;
}

double primal_objective(const ScoreMatrix& X, const Eigen::VectorXd& Y, const Eigen::VectorXd& B,
                        double lambda1, double lambda2, const Eigen::VectorXd& weights) {
  const Eigen::VectorXd margins = X.data * B;
  double value = 0.0;
  for (Eigen::Index i = 0; i < Y.size(); ++i) {
    value += softplus(-Y(i) * margins(i));
  }
  for (int j = 0; j < X.p; ++j) {
    const double norm = B.segment(static_cast<Eigen::Index>(j) * X.k, X.k).norm();
    value += weights(j) * (lambda1 * norm + 0.5 * lambda2 * norm * norm);
  }
  return value;
}

PgResult pg_reference(const ScoreMatrix& X, const Eigen::VectorXd& Y, double lambda1,
                      double lambda2, const Eigen::VectorXd& weights, long max_iter,
                      double rel_tol) {
  const int k = X.k;
  const Eigen::Index pk = X.data.cols();

  // Smooth part: logistic loss + ridge; nonsmooth: group lasso with a plain
  // block soft-threshold.
  const auto smooth_grad = [&](const Eigen::VectorXd& b) {
    const Eigen::VectorXd margins = X.data * b;
    Eigen::VectorXd s(Y.size());
    for (Eigen::Index i = 0; i < Y.size(); ++i) {
      s(i) = -Y(i) * sigmoid(-Y(i) * margins(i));
    }
    Eigen::VectorXd grad = X.data.transpose() * s;
    for (int j = 0; j < X.p; ++j) {
      grad.segment(static_cast<Eigen::Index>(j) * k, k) +=
          weights(j) * lambda2 * b.segment(static_cast<Eigen::Index>(j) * k, k);
    }
    return grad;
  };
  const auto shrink = [&](Eigen::VectorXd b, double t) {
    for (int j = 0; j < X.p; ++j) {
      auto bj = b.segment(static_cast<Eigen::Index>(j) * k, k);
      const double norm = bj.norm();
      const double cut = t * weights(j) * lambda1;
      if (norm <= cut) {
        bj.setZero();
      } else {
        bj *= 1.0 - cut / norm;
      }
    }
    return b;
  };

  const double spectral =
      Eigen::JacobiSVD<Eigen::MatrixXd>(X.data).singularValues()(0);
  const double lipschitz = 0.25 * spectral * spectral + lambda2 * weights.maxCoeff();
  const double t = 1.0 / lipschitz;

  PgResult result;
  Eigen::VectorXd b = Eigen::VectorXd::Zero(pk);
  Eigen::VectorXd y = b;
  double momentum = 1.0;
  double prev_obj = primal_objective(X, Y, b, lambda1, lambda2, weights);
  int stall = 0;
  for (long it = 0; it < max_iter; ++it) {
    const Eigen::VectorXd b_next = shrink(y - t * smooth_grad(y), t);
    const double momentum_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * momentum * momentum));
    Eigen::VectorXd y_next = b_next + ((momentum - 1.0) / momentum_next) * (b_next - b);
    const double obj = primal_objective(X, Y, b_next, lambda1, lambda2, weights);
    if (obj > prev_obj) {
      y_next = b_next;  // restart momentum on non-monotone step
      momentum = 1.0;
    } else {
      momentum = momentum_next;
    }
    const bool tiny = std::abs(prev_obj - obj) <= rel_tol * (1.0 + std::abs(obj));
    stall = (tiny && obj <= prev_obj) ? stall + 1 : 0;
    b = b_next;
    y = y_next;
    prev_obj = std::min(prev_obj, obj);
    result.iterations = it + 1;
    if (stall >= 100) {
      break;
    }
  }
  result.B = b;
  result.objective = primal_objective(X, Y, b, lambda1, lambda2, weights);
  return result;
}

double bessel_k_quadrature(double nu, double x) {
  // K_nu(x) = int_0^inf exp(-x cosh t) cosh(nu t) dt, Simpson on [0, t_max].
  const double t_max = std::max(16.0, std::log(1600.0 / x) + 4.0);
  const long intervals = 1L << 21;
  const double h = t_max / static_cast<double>(intervals);
  const auto f = [&](double t) {
    const double exponent = -x * std::cosh(t);
    if (exponent < -745.0) {
      return 0.0;
    }
    return std::exp(exponent) * std::cosh(nu * t);
  };
  double sum = f(0.0) + f(t_max);
  for (long i = 1; i < intervals; ++i) {
    sum += f(h * static_cast<double>(i)) * (i % 2 == 1 ? 4.0 : 2.0);
  }
  return sum * h / 3.0;
}

double matern_general(double t, double s, double eta2, double ell, double nu) {
  const double d = std::abs(t - s);
  if (d == 0.0) {
    return eta2;
  }
  const double z = std::sqrt(2.0 * nu) * d / ell;
  return eta2 / (std::tgamma(nu) * std::pow(2.0, nu - 1.0)) * std::pow(z, nu) *
         bessel_k_quadrature(nu, z);
}

}  // namespace fsfc::oracle
