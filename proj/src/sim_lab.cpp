#include "fsfc/sim_lab.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <random>

#include "fsfc/errors.hpp"
#include "fsfc/util.hpp"

namespace fsfc {

namespace {

int half_integer_order(double nu) {
  const double m = nu - 0.5;
  const double rounded = std::round(m);
  if (m < 0.0 || std::abs(m - rounded) > 1e-9 || rounded > 80.0) {
    throw ConfigError("Matern smoothness must be a half-integer (nu = m + 1/2)");
  }
  return static_cast<int>(rounded);
}

double factorial(int v) {
  double out = 1.0;
  for (int i = 2; i <= v; ++i) {
    out *= i;
  }
  return out;
}

Eigen::MatrixXd cholesky_with_jitter(Eigen::MatrixXd gram, double eta2) {
  double jitter = 1e-10 * eta2;
  const double jitter_cap = 1e-4 * eta2;
  Eigen::MatrixXd attempt = gram;
  while (true) {
    attempt = gram;
    attempt.diagonal().array() += jitter;
    Eigen::LLT<Eigen::MatrixXd> llt(attempt);
    if (llt.info() == Eigen::Success) {
      return llt.matrixL();
    }
    if (jitter >= jitter_cap) {
      throw DataError("Matern covariance factorization failed even with jitter");
    }
    jitter *= 10.0;
  }
}

Eigen::MatrixXd draw_curves(const Eigen::MatrixXd& chol_lower, int count, std::uint64_t seed) {
  const Eigen::Index m = chol_lower.rows();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::MatrixXd xi(count, m);
  for (Eigen::Index i = 0; i < count; ++i) {
    for (Eigen::Index g = 0; g < m; ++g) {
      xi(i, g) = normal(rng);
    }
  }
  return xi * chol_lower.transpose();
}

std::string padded_id(const char* prefix, int index, int total) {
  int width = 1;
  for (int v = total; v >= 10; v /= 10) {
    ++width;
  }
  width = std::max(width, 4);
  std::string digits = std::to_string(index + 1);
  return std::string(prefix) + std::string(static_cast<std::size_t>(width) - digits.size(), '0') +
         digits;
}

Eigen::VectorXd draw_labels(const Eigen::VectorXd& margins, std::uint64_t seed,
                            bool require_both_classes) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const Eigen::Index n = margins.size();
  Eigen::VectorXd labels(n);
  for (int attempt = 0; attempt < 10; ++attempt) {
    bool pos = false;
    bool neg = false;
    for (Eigen::Index i = 0; i < n; ++i) {
      labels(i) = unif(rng) < sigmoid(margins(i)) ? 1.0 : -1.0;
      (labels(i) > 0 ? pos : neg) = true;
    }
    if (!require_both_classes || (pos && neg)) {
      return labels;
    }
  }
  throw DataError("label generation produced a single class 10 times in a row");
}

}  // namespace

void MaternParams::validate() const {
  if (!(eta2 > 0.0) || !(ell > 0.0) || !(nu > 0.0)) {
    throw ConfigError("Matern parameters must be positive");
  }
  half_integer_order(nu);
}

double matern_cov(double t, double s, const MaternParams& params) {
  params.validate();
  const double d = std::abs(t - s);
  if (d == 0.0) {
    return params.eta2;
  }
  const int m = half_integer_order(params.nu);
  const double z = std::sqrt(2.0 * params.nu) * d / params.ell;
  double poly = 0.0;
  for (int i = 0; i <= m; ++i) {
    poly += factorial(m + i) / (factorial(i) * factorial(m - i)) * std::pow(2.0 * z, m - i);
  }
  return params.eta2 * std::exp(-z) * factorial(m) / factorial(2 * m) * poly;
}

Eigen::MatrixXd matern_gram(const TimeGrid& grid, const MaternParams& params) {
  const int m = grid.size();
  Eigen::MatrixXd gram(m, m);
  for (int a = 0; a < m; ++a) {
    for (int b = 0; b <= a; ++b) {
      const double v = matern_cov(grid.points(a), grid.points(b), params);
      gram(a, b) = v;
      gram(b, a) = v;
    }
  }
  return gram;
}

Eigen::MatrixXd sample_gp(const TimeGrid& grid, const MaternParams& params, int count,
                          std::uint64_t seed) {
  if (count < 1) {
    throw ConfigError("sample count must be positive");
  }
  const Eigen::MatrixXd chol = cholesky_with_jitter(matern_gram(grid, params), params.eta2);
  return draw_curves(chol, count, seed);
}

void ScenarioSpec::validate() const {
  if (n < 2 || p < 1) {
    throw ConfigError("scenario needs n >= 2 and p >= 1");
  }
  if (p0 < 0 || p0 > p) {
    throw ConfigError("p0 must lie in [0, p]");
  }
  if (grid_size < 2) {
    throw ConfigError("grid_size must be at least 2");
  }
  if (effective_n_test() < 1) {
    throw ConfigError("n_test must be at least 1");
  }
}

ScenarioData generate_scenario(const ScenarioSpec& spec, const MaternParams& matern) {
  spec.validate();
  matern.validate();
  const int m = spec.grid_size;
  const int n_test = spec.effective_n_test();
  const TimeGrid grid = TimeGrid::uniform(m);
  const Eigen::MatrixXd chol = cholesky_with_jitter(matern_gram(grid, matern), matern.eta2);

  ScenarioData data;
  data.train.grid = grid;
  data.test.grid = grid;
  data.true_coefficients = Eigen::MatrixXd::Zero(spec.p, m);
  if (spec.p0 > 0) {
    data.true_coefficients.topRows(spec.p0) =
        draw_curves(chol, spec.p0, derive_seed(spec.seed, 101));
    for (int j = 0; j < spec.p0; ++j) {
      data.support.push_back(j);
    }
  }

  data.train.features.resize(static_cast<std::size_t>(spec.p));
  data.test.features.resize(static_cast<std::size_t>(spec.p));
  Eigen::VectorXd train_margin = Eigen::VectorXd::Zero(spec.n);
  Eigen::VectorXd test_margin = Eigen::VectorXd::Zero(n_test);
  for (int j = 0; j < spec.p; ++j) {
    data.train.features[j] = draw_curves(chol, spec.n, derive_seed(spec.seed, 1000 + j));
    data.test.features[j] = draw_curves(chol, n_test, derive_seed(spec.seed, 2000000 + j));
    if (j < spec.p0) {
      // Quadrature margin of the true functional inner product, at the scale
      // of the plain grid sum sum_g B(t_g) X(t_g) (gain m-1 on a uniform
      // grid). Unit-variance integral margins would leave the labels close
      // to coin flips; the grid-sum scale keeps them strongly informative.
      const Eigen::VectorXd weighted = static_cast<double>(m - 1) *
          grid.weights.cwiseProduct(data.true_coefficients.row(j).transpose());
      train_margin.noalias() += data.train.features[j] * weighted;
      test_margin.noalias() += data.test.features[j] * weighted;
    }
  }
  // Only the training labels must contain both classes for the scenario to
  // be fittable; a small test set may legitimately come out one-sided.
  data.y_train = draw_labels(train_margin, derive_seed(spec.seed, 11), true);
  data.y_test = draw_labels(test_margin, derive_seed(spec.seed, 12), false);

  data.train.feature_ids.reserve(static_cast<std::size_t>(spec.p));
  for (int j = 0; j < spec.p; ++j) {
    data.train.feature_ids.push_back(padded_id("f", j, spec.p));
  }
  data.test.feature_ids = data.train.feature_ids;
  for (int i = 0; i < spec.n; ++i) {
    data.train.instance_ids.push_back(padded_id("train", i, spec.n));
  }
  for (int i = 0; i < n_test; ++i) {
    data.test.instance_ids.push_back(padded_id("test", i, n_test));
  }
  return data;
}

std::pair<double, double> selection_metrics(const std::vector<int>& selected,
                                            const std::vector<int>& truth) {
  std::vector<int> sorted_truth = truth;
  std::sort(sorted_truth.begin(), sorted_truth.end());
  int hits = 0;
  for (const int j : selected) {
    if (std::binary_search(sorted_truth.begin(), sorted_truth.end(), j)) {
      ++hits;
    }
  }
  const double precision =
      selected.empty() ? 0.0 : static_cast<double>(hits) / static_cast<double>(selected.size());
  const double recall =
      truth.empty() ? 0.0 : static_cast<double>(hits) / static_cast<double>(truth.size());
  return {precision, recall};
}

BenchResult run_replications(const ScenarioSpec& spec, int reps, const RunConfig& config,
                             const MaternParams& matern) {
  if (reps < 1) {
    throw ConfigError("reps must be at least 1");
  }
  spec.validate();
  BenchResult bench;
  bench.rows.reserve(static_cast<std::size_t>(reps));
  for (int rep = 0; rep < reps; ++rep) {
    ReplicationRow row;
    row.rep = rep;
    row.seed = derive_seed(spec.seed, 500000 + static_cast<std::uint64_t>(rep));
    const auto t0 = std::chrono::steady_clock::now();
    try {
      ScenarioSpec rep_spec = spec;
      rep_spec.seed = row.seed;
      RunConfig rep_config = config;
      rep_config.seed = derive_seed(row.seed, 7);
      const ScenarioData data = generate_scenario(rep_spec, matern);
      const PipelineResult fit = fit_pipeline(data.train, data.y_train, rep_config);

      const Prediction on_train = predict(fit.model, data.train);
      const Prediction on_test = predict(fit.model, data.test);
      int train_ok = 0;
      for (Eigen::Index i = 0; i < data.y_train.size(); ++i) {
        train_ok += on_train.label(i) == data.y_train(i) ? 1 : 0;
      }
      int test_ok = 0;
      for (Eigen::Index i = 0; i < data.y_test.size(); ++i) {
        test_ok += on_test.label(i) == data.y_test(i) ? 1 : 0;
      }
      row.train_accuracy = static_cast<double>(train_ok) / static_cast<double>(data.y_train.size());
      row.test_accuracy = static_cast<double>(test_ok) / static_cast<double>(data.y_test.size());
      const auto [precision, recall] = selection_metrics(fit.model.active, data.support);
      row.precision = precision;
      row.recall = recall;
      row.selected_lambda1 = fit.model.lambda1;
      row.active_count = static_cast<int>(fit.model.active.size());
      row.ok = true;
    } catch (const std::exception& e) {
      row.ok = false;
      row.error = e.what();
      ++bench.failed;
    }
    row.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    bench.rows.push_back(std::move(row));
  }
  return bench;
}

std::vector<MetricSummary> summarize(const BenchResult& bench) {
  const auto aggregate = [&](const std::string& name, auto getter) {
    MetricSummary s;
    s.name = name;
    std::vector<double> values;
    for (const auto& row : bench.rows) {
      if (row.ok) {
        values.push_back(getter(row));
      }
    }
    s.count = static_cast<int>(values.size());
    if (values.empty()) {
      return s;
    }
    double sum = 0.0;
    for (const double v : values) {
      sum += v;
    }
    s.mean = sum / static_cast<double>(values.size());
    double ss = 0.0;
    for (const double v : values) {
      ss += (v - s.mean) * (v - s.mean);
    }
    s.sd = values.size() > 1 ? std::sqrt(ss / static_cast<double>(values.size() - 1)) : 0.0;
    std::sort(values.begin(), values.end());
    s.min = values.front();
    s.max = values.back();
    const std::size_t h = values.size() / 2;
    s.median = values.size() % 2 == 1 ? values[h] : 0.5 * (values[h - 1] + values[h]);
    return s;
  };
  return {
      aggregate("precision", [](const ReplicationRow& r) { return r.precision; }),
      aggregate("recall", [](const ReplicationRow& r) { return r.recall; }),
      aggregate("train_accuracy", [](const ReplicationRow& r) { return r.train_accuracy; }),
      aggregate("test_accuracy", [](const ReplicationRow& r) { return r.test_accuracy; }),
      aggregate("wall_seconds", [](const ReplicationRow& r) { return r.wall_seconds; }),
  };
}

}  // namespace fsfc
