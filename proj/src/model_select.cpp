#include "fsfc/model_select.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "fsfc/errors.hpp"
#include "fsfc/util.hpp"

namespace fsfc {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

Eigen::VectorXd gather_rows(const Eigen::MatrixXd& mat, const std::vector<int>& rows,
                            Eigen::MatrixXd& out) {
  out.resize(static_cast<Eigen::Index>(rows.size()), mat.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.row(static_cast<Eigen::Index>(i)) = mat.row(rows[i]);
  }
  return {};
}

double classification_accuracy(const Eigen::VectorXd& margins, const Eigen::VectorXd& labels) {
  Eigen::Index correct = 0;
  for (Eigen::Index i = 0; i < margins.size(); ++i) {
    const double predicted = margins(i) > 0.0 ? 1.0 : -1.0;
    if (predicted == labels(i)) {
      ++correct;
    }
  }
  return margins.size() > 0 ? static_cast<double>(correct) / static_cast<double>(margins.size())
                            : 0.0;
}

void check_labels(const Eigen::VectorXd& labels) {
  bool pos = false;
  bool neg = false;
  for (Eigen::Index i = 0; i < labels.size(); ++i) {
    if (labels(i) == 1.0) {
      pos = true;
    } else if (labels(i) == -1.0) {
      neg = true;
    } else {
      throw DataError("labels must be -1 or 1");
    }
  }
  if (!pos || !neg) {
    throw DataError("both classes must be present");
  }
}

SolverConfig schedule_for(const RunConfig& config, double c, double lambda_max_value) {
  SolverConfig sc = config.solver_config();
  sc.sigma0 = 0.1 * c / lambda_max_value;
  sc.sigma_growth = std::max(std::min(5.0, 1.0 + 10.0 * c), 1.1);
  return sc;
}

// Design matrices of one cross-validation fold.
struct FoldDesign {
  ScoreMatrix train;
  ScoreMatrix test;
};

FoldDesign build_fold_design(const CurvePanel& panel, const std::vector<int>& train_rows,
                             const std::vector<int>& test_rows, int k, int threads) {
  FoldDesign design;
  const int p = panel.p();
  design.train.n = static_cast<int>(train_rows.size());
  design.train.p = p;
  design.train.k = k;
  design.train.data.resize(design.train.n, static_cast<Eigen::Index>(p) * k);
  design.test.n = static_cast<int>(test_rows.size());
  design.test.p = p;
  design.test.k = k;
  design.test.data.resize(design.test.n, static_cast<Eigen::Index>(p) * k);

  parallel_for(p, threads, [&](int j) {
    Eigen::MatrixXd train_slab;
    Eigen::MatrixXd test_slab;
    gather_rows(panel.features[j], train_rows, train_slab);
    gather_rows(panel.features[j], test_rows, test_slab);

    CurvePanel one;
    one.grid = panel.grid;
    one.features.push_back(std::move(train_slab));
    const StandardizeResult std_train = standardize_panel(one);
    const FpcBasis basis = compute_fpc(std_train.panel, 0, k);

    design.train.data.middleCols(static_cast<Eigen::Index>(j) * k, k) =
        feature_scores(std_train.panel.features[0], basis);
    const Eigen::MatrixXd test_std =
        standardize_with(test_slab, std_train.mean.row(0), std_train.sd.row(0));
    design.test.data.middleCols(static_cast<Eigen::Index>(j) * k, k) =
        feature_scores(test_std, basis);
  });
  return design;
}

}  // namespace

void RunConfig::validate() const {
  if (k < 1) {
    throw ConfigError("k must be at least 1");
  }
  if (!(alpha > 0.0 && alpha < 1.0)) {
    throw ConfigError("alpha must lie in (0, 1)");
  }
  if (n_lambda < 2) {
    throw ConfigError("the lambda grid needs at least 2 points");
  }
  if (folds < 2) {
    throw ConfigError("cross-validation needs at least 2 folds");
  }
  if (threads < 0) {
    throw ConfigError("threads must be nonnegative");
  }
  SolverConfig sc = solver_config();
  sc.validate();
}

SolverConfig RunConfig::solver_config() const {
  SolverConfig sc;
  sc.tol = tol;
  sc.mu = mu;
  sc.max_outer = max_outer;
  sc.max_inner = max_inner;
  sc.max_linesearch_halvings = max_linesearch_halvings;
  return sc;
}

double lambda_max(const ScoreMatrix& scores, const Eigen::VectorXd& labels,
                  const Eigen::VectorXd& weights) {
  if (labels.size() != scores.n) {
    throw DataError("labels length does not match score matrix");
  }
  if (static_cast<int>(weights.size()) != scores.p) {
    throw ConfigError("weights length does not match score matrix");
  }
  const Eigen::VectorXd xty = scores.data.transpose() * labels;
  double best = 0.0;
  for (int j = 0; j < scores.p; ++j) {
    const double scaled =
        xty.segment(static_cast<Eigen::Index>(j) * scores.k, scores.k).norm() / weights(j);
    best = std::max(best, scaled);
  }
  return 0.5 * best;
}

LambdaGrid build_lambda_grid(const ScoreMatrix& scores, const Eigen::VectorXd& labels,
                             const Eigen::VectorXd& weights, double alpha, int n_points) {
  if (!(alpha > 0.0 && alpha < 1.0)) {
    throw ConfigError("alpha must lie in (0, 1)");
  }
  if (n_points < 2) {
    throw ConfigError("the lambda grid needs at least 2 points");
  }
  LambdaGrid grid;
  grid.lambda_max = lambda_max(scores, labels, weights);
  if (!(grid.lambda_max > 0.0)) {
    throw ConfigError("degenerate problem: lambda_max is 0 (X^T Y vanishes)");
  }
  grid.alpha = alpha;
  grid.c_values.resize(n_points);
  for (int t = 0; t < n_points; ++t) {
    grid.c_values(t) =
        std::pow(10.0, -2.0 * static_cast<double>(t) / static_cast<double>(n_points - 1));
  }
  grid.c_values(0) = 1.0;
  return grid;
}

PathResult path_search(const ScoreMatrix& scores, const Eigen::VectorXd& labels,
                       const LambdaGrid& grid, const Eigen::VectorXd& weights,
                       const RunConfig& config) {
  PathResult path;
  path.entries.reserve(static_cast<std::size_t>(grid.size()));
  std::optional<SolverState> warm;
  for (int t = 0; t < grid.size(); ++t) {
    const double c = grid.c_values(t);
    PathEntry entry;
    entry.c = c;
    entry.lambda1 = grid.lambda1(t);
    entry.lambda2 = grid.lambda2(t);
    try {
      const SolveReport report = dal_fit(scores, labels, entry.lambda1, entry.lambda2, weights,
                                         warm, schedule_for(config, c, grid.lambda_max));
      entry.B = report.B;
      entry.active = report.active_features;
      entry.kkt_residual = report.kkt_residual;
      entry.converged = report.converged;
      entry.train_accuracy = classification_accuracy(scores.data * report.B, labels);
      SolverState next;
      next.V = report.V;
      next.Z = report.Z;
      next.B = report.B;
      warm = std::move(next);
    } catch (const std::runtime_error&) {
      entry.B = Eigen::VectorXd::Zero(scores.data.cols());
      entry.converged = false;
      entry.kkt_residual = kInf;
      warm.reset();
    }
    path.entries.push_back(std::move(entry));
  }
  return path;
}

std::vector<int> assign_folds(const CurvePanel& panel, const Eigen::VectorXd& labels, int folds,
                              std::uint64_t seed) {
  const int n = panel.n();
  if (labels.size() != n) {
    throw DataError("labels length does not match panel");
  }
  if (folds < 2 || folds > n) {
    throw ConfigError("folds must lie in [2, n]");
  }

  // Content-derived instance keys make the partition independent of row order.
  std::vector<std::uint64_t> keys(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    const double y = labels(i);
    h = fnv1a64(&y, sizeof(y), h);
    for (const auto& slab : panel.features) {
      for (int g = 0; g < slab.cols(); ++g) {
        const double v = slab(i, g);
        h = fnv1a64(&v, sizeof(v), h);
      }
    }
    keys[static_cast<std::size_t>(i)] = h;
  }
  const auto content_less = [&](int a, int b) {
    if (keys[static_cast<std::size_t>(a)] != keys[static_cast<std::size_t>(b)]) {
      return keys[static_cast<std::size_t>(a)] < keys[static_cast<std::size_t>(b)];
    }
    for (const auto& slab : panel.features) {
      for (int g = 0; g < slab.cols(); ++g) {
        if (slab(a, g) != slab(b, g)) {
          return slab(a, g) < slab(b, g);
        }
      }
    }
    return a < b;  // identical content: interchangeable
  };

  std::vector<int> fold_of(static_cast<std::size_t>(n), -1);
  int dealt = 0;
  for (const double cls : {-1.0, 1.0}) {
    std::vector<int> members;
    for (int i = 0; i < n; ++i) {
      if (labels(i) == cls) {
        members.push_back(i);
      }
    }
    if (static_cast<int>(members.size()) < folds) {
      throw ConfigError("stratified " + std::to_string(folds) + "-fold split needs at least " +
                        std::to_string(folds) + " instances of each class");
    }
    std::sort(members.begin(), members.end(), content_less);
    std::mt19937_64 rng(derive_seed(seed, cls > 0 ? 2 : 1));
    for (std::size_t i = members.size() - 1; i > 0; --i) {
      const std::size_t j = static_cast<std::size_t>(rng() % (i + 1));
      std::swap(members[i], members[j]);
    }
    for (const int idx : members) {
      fold_of[static_cast<std::size_t>(idx)] = dealt % folds;
      ++dealt;
    }
  }
  return fold_of;
}

CvResult cross_validate(const CurvePanel& panel, const Eigen::VectorXd& labels,
                        const LambdaGrid& grid, const Eigen::VectorXd& weights,
                        const RunConfig& config) {
  check_labels(labels);
  const int n = panel.n();
  const int folds = config.folds;
  const std::vector<int> fold_of = assign_folds(panel, labels, folds, config.seed);
  const int threads = resolve_threads(config.threads);

  CvResult cv;
  cv.fold_accuracy.resize(grid.size(), folds);

  // Shared-basis mode standardizes and projects once on the full data.
  ScoreMatrix shared_scores;
  if (config.cv_shared_basis) {
    const StandardizeResult std_full = standardize_panel(panel);
    const std::vector<FpcBasis> bases = compute_all_fpc(std_full.panel, config.k, threads);
    shared_scores = compute_scores(std_full.panel, bases);
  }

  // Folds are independent; run them on the worker pool and keep the inner
  // per-feature work single-threaded while more than one fold is in flight.
  const int fold_workers = std::min(threads, folds);
  const int inner_threads = fold_workers > 1 ? 1 : threads;
  parallel_for(folds, fold_workers, [&](int f) {
    std::vector<int> train_rows;
    std::vector<int> test_rows;
    for (int i = 0; i < n; ++i) {
      (fold_of[static_cast<std::size_t>(i)] == f ? test_rows : train_rows).push_back(i);
    }
    if (config.k > std::min<int>(static_cast<int>(train_rows.size()), panel.m())) {
      throw ConfigError("k exceeds the fold training size");
    }
    Eigen::VectorXd y_train(static_cast<Eigen::Index>(train_rows.size()));
    Eigen::VectorXd y_test(static_cast<Eigen::Index>(test_rows.size()));
    for (std::size_t i = 0; i < train_rows.size(); ++i) {
      y_train(static_cast<Eigen::Index>(i)) = labels(train_rows[i]);
    }
    for (std::size_t i = 0; i < test_rows.size(); ++i) {
      y_test(static_cast<Eigen::Index>(i)) = labels(test_rows[i]);
    }
    check_labels(y_train);
    check_labels(y_test);

    FoldDesign design;
    if (config.cv_shared_basis) {
      design.train.n = static_cast<int>(train_rows.size());
      design.train.p = shared_scores.p;
      design.train.k = shared_scores.k;
      gather_rows(shared_scores.data, train_rows, design.train.data);
      design.test.n = static_cast<int>(test_rows.size());
      design.test.p = shared_scores.p;
      design.test.k = shared_scores.k;
      gather_rows(shared_scores.data, test_rows, design.test.data);
    } else {
      design = build_fold_design(panel, train_rows, test_rows, config.k, inner_threads);
    }

    const PathResult fold_path = path_search(design.train, y_train, grid, weights, config);
    for (int t = 0; t < grid.size(); ++t) {
      cv.fold_accuracy(t, f) =
          classification_accuracy(design.test.data * fold_path.entries[t].B, y_test);
    }
  });

  cv.mean = cv.fold_accuracy.rowwise().mean();
  cv.sd.resize(grid.size());
  for (int t = 0; t < grid.size(); ++t) {
    const double mean = cv.mean(t);
    cv.sd(t) = folds > 1 ? std::sqrt((cv.fold_accuracy.row(t).array() - mean).square().sum() /
                                     static_cast<double>(folds - 1))
                         : 0.0;
  }
  cv.selected_index = 0;
  for (int t = 1; t < grid.size(); ++t) {
    if (cv.mean(t) > cv.mean(cv.selected_index)) {
      cv.selected_index = t;  // ties stay with the earlier (larger) lambda1
    }
  }
  return cv;
}

RefitResult adaptive_refit(const PathResult& path, const ScoreMatrix& scores,
                           const Eigen::VectorXd& labels, const LambdaGrid& grid,
                           const RunConfig& config) {
  if (path.selected_index < 0 ||
      path.selected_index >= static_cast<int>(path.entries.size())) {
    throw ConfigError("adaptive refit requires a selected path point");
  }
  const PathEntry& selected = path.entries[static_cast<std::size_t>(path.selected_index)];
  const int k = scores.k;
  const int p = scores.p;

  RefitResult refit;
  refit.B = Eigen::VectorXd::Zero(scores.data.cols());
  const std::vector<int>& stage_one = selected.active;
  const int r = static_cast<int>(stage_one.size());
  if (r == 0) {
    refit.omega = Eigen::VectorXd::Ones(p);
    refit.converged = selected.converged;
    refit.warning = "selected model has no active features; adaptive refit skipped";
    return refit;
  }

  Eigen::VectorXd norms(r);
  for (int q = 0; q < r; ++q) {
    norms(q) = selected.B.segment(static_cast<Eigen::Index>(stage_one[q]) * k, k).norm();
  }
  double sd_b = 0.0;
  if (r >= 2) {
    const double mean = norms.mean();
    sd_b = std::sqrt((norms.array() - mean).square().sum() / static_cast<double>(r - 1));
  }
  Eigen::VectorXd omega_active(r);
  if (r == 1 || !(sd_b > 0.0)) {
    omega_active.setOnes();  // degenerate sd; unweighted refit
    refit.warning = r == 1 ? "single active feature; adaptive weights fall back to 1"
                           : "active block norms are all equal; adaptive weights fall back to 1";
  } else {
    for (int q = 0; q < r; ++q) {
      omega_active(q) = sd_b / norms(q);
    }
  }

  // Inactive features are excluded from the refit design (omega = infinity).
  ScoreMatrix reduced;
  reduced.n = scores.n;
  reduced.p = r;
  reduced.k = k;
  reduced.data.resize(scores.n, static_cast<Eigen::Index>(r) * k);
  Eigen::VectorXd warm_b(static_cast<Eigen::Index>(r) * k);
  for (int q = 0; q < r; ++q) {
    reduced.data.middleCols(static_cast<Eigen::Index>(q) * k, k) = scores.block(stage_one[q]);
    warm_b.segment(static_cast<Eigen::Index>(q) * k, k) =
        selected.B.segment(static_cast<Eigen::Index>(stage_one[q]) * k, k);
  }
  SolverState init;
  init.V = -0.5 * labels;
  init.B = warm_b;

  const SolveReport report =
      dal_fit(reduced, labels, selected.lambda1, selected.lambda2, omega_active, init,
              schedule_for(config, selected.c, grid.lambda_max));

  refit.omega = Eigen::VectorXd::Constant(p, kInf);
  for (int q = 0; q < r; ++q) {
    refit.omega(stage_one[q]) = omega_active(q);
    refit.B.segment(static_cast<Eigen::Index>(stage_one[q]) * k, k) =
        report.B.segment(static_cast<Eigen::Index>(q) * k, k);
    if (report.B.segment(static_cast<Eigen::Index>(q) * k, k).norm() > 0.0) {
      refit.active.push_back(stage_one[q]);
    }
  }
  refit.refit_done = true;
  refit.converged = report.converged;
  refit.kkt_residual = report.kkt_residual;
  refit.trace = report.trace;
  return refit;
}

Prediction predict(const FittedModel& model, const CurvePanel& panel) {
  if (!model.grid.approx_equals(panel.grid, 1e-9)) {
    throw DataError("panel grid does not match the model grid");
  }
  std::vector<int> column_of(static_cast<std::size_t>(model.p()), -1);
  if (!model.feature_names.empty() && !panel.feature_ids.empty()) {
    for (int j = 0; j < model.p(); ++j) {
      const auto it =
          std::find(panel.feature_ids.begin(), panel.feature_ids.end(), model.feature_names[j]);
      if (it == panel.feature_ids.end()) {
        throw DataError("panel is missing model feature '" + model.feature_names[j] + "'");
      }
      column_of[static_cast<std::size_t>(j)] =
          static_cast<int>(std::distance(panel.feature_ids.begin(), it));
    }
  } else {
    if (panel.p() != model.p()) {
      throw DataError("panel has " + std::to_string(panel.p()) + " features, model expects " +
                      std::to_string(model.p()));
    }
    std::iota(column_of.begin(), column_of.end(), 0);
  }

  Eigen::VectorXd margins = Eigen::VectorXd::Zero(panel.n());
  for (const int j : model.active) {
    const int col = column_of[static_cast<std::size_t>(j)];
    const Eigen::MatrixXd std_slab =
        standardize_with(panel.features[col], model.mean_curves.row(j), model.sd_curves.row(j));
    margins.noalias() += feature_scores(std_slab, model.bases[static_cast<std::size_t>(j)]) *
                         model.coefficient_block(j);
  }

  Prediction pred;
  pred.probability.resize(panel.n());
  pred.label.resize(panel.n());
  for (int i = 0; i < panel.n(); ++i) {
    pred.probability(i) = sigmoid(margins(i));
    pred.label(i) = pred.probability(i) > 0.5 ? 1.0 : -1.0;
  }
  return pred;
}

PipelineResult fit_pipeline(const CurvePanel& panel, const Eigen::VectorXd& labels,
                            const RunConfig& config) {
  config.validate();
  panel.validate();
  check_labels(labels);
  const int n = panel.n();
  const int p = panel.p();
  const int m = panel.m();
  if (labels.size() != n) {
    throw DataError("labels length does not match panel");
  }
  if (config.k > std::min(n, m)) {
    throw ConfigError("k exceeds min(n, m)");
  }
  const int threads = resolve_threads(config.threads);

  // Full-data design, one feature at a time.
  PipelineResult result;
  FittedModel& model = result.model;
  model.grid = panel.grid;
  model.k = config.k;
  model.alpha = config.alpha;
  model.feature_names = panel.feature_ids;
  model.mean_curves.resize(p, m);
  model.sd_curves.resize(p, m);
  model.bases.resize(static_cast<std::size_t>(p));
  ScoreMatrix scores;
  scores.n = n;
  scores.p = p;
  scores.k = config.k;
  scores.data.resize(n, static_cast<Eigen::Index>(p) * config.k);
  parallel_for(p, threads, [&](int j) {
    CurvePanel one;
    one.grid = panel.grid;
    one.features.push_back(panel.features[j]);
    const StandardizeResult std_one = standardize_panel(one);
    model.mean_curves.row(j) = std_one.mean.row(0);
    model.sd_curves.row(j) = std_one.sd.row(0);
    FpcBasis basis = compute_fpc(std_one.panel, 0, config.k);
    basis.feature_index = j;
    scores.data.middleCols(static_cast<Eigen::Index>(j) * config.k, config.k) =
        feature_scores(std_one.panel.features[0], basis);
    model.bases[static_cast<std::size_t>(j)] = std::move(basis);
  });

  const Eigen::VectorXd unit_weights = Eigen::VectorXd::Ones(p);
  const LambdaGrid grid = build_lambda_grid(scores, labels, unit_weights, config.alpha,
                                            config.n_lambda);

  const CvResult cv = cross_validate(panel, labels, grid, unit_weights, config);
  result.path = path_search(scores, labels, grid, unit_weights, config);
  result.path.cv_mean = cv.mean;
  result.path.cv_sd = cv.sd;
  result.path.selected_index = cv.selected_index;

  result.refit = adaptive_refit(result.path, scores, labels, grid, config);
  const RefitResult& refit = result.refit;
  const PathEntry& selected =
      result.path.entries[static_cast<std::size_t>(result.path.selected_index)];

  model.B = refit.B;
  model.omega = refit.omega;
  model.active = refit.active;
  model.lambda1 = selected.lambda1;
  model.lambda2 = selected.lambda2;
  model.trained_n = n;
  model.folds = config.folds;
  model.seed = config.seed;
  model.cv_shared_basis = config.cv_shared_basis;
  model.converged = selected.converged && (!refit.refit_done || refit.converged);
  return result;
}

}  // namespace fsfc
