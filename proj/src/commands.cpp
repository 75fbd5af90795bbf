#include "fsfc/commands.hpp"

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "fsfc/csv_io.hpp"
#include "fsfc/errors.hpp"
#include "fsfc/model_io.hpp"
#include "fsfc/model_select.hpp"
#include "fsfc/run_config_io.hpp"
#include "fsfc/sim_lab.hpp"
#include "fsfc/util.hpp"

namespace fsfc {

namespace {

namespace fs = std::filesystem;

void fail_config(const std::string& message) { throw ConfigError(message); }

std::ofstream open_output(const fs::path& path) {
  std::ofstream out(path);
  if (!out) {
    throw DataError("cannot write '" + path.string() + "'");
  }
  return out;
}

void write_path_report(const PathResult& path, const fs::path& file) {
  auto out = open_output(file);
  out << "index,c,lambda1,lambda2,active_count,cv_accuracy_mean,cv_accuracy_sd,"
         "kkt_residual,converged,train_accuracy,selected\n";
  for (std::size_t t = 0; t < path.entries.size(); ++t) {
    const PathEntry& e = path.entries[t];
    const bool has_cv = path.cv_mean.size() == static_cast<Eigen::Index>(path.entries.size());
    out << t << ',' << format_double(e.c) << ',' << format_double(e.lambda1) << ','
        << format_double(e.lambda2) << ',' << e.active.size() << ','
        << (has_cv ? format_double(path.cv_mean(static_cast<Eigen::Index>(t))) : "") << ','
        << (has_cv ? format_double(path.cv_sd(static_cast<Eigen::Index>(t))) : "") << ','
        << format_double(e.kkt_residual) << ',' << (e.converged ? 1 : 0) << ','
        << format_double(e.train_accuracy) << ','
        << (static_cast<int>(t) == path.selected_index ? 1 : 0) << '\n';
  }
}

void write_coefficient_curves(const FittedModel& model, const fs::path& dir) {
  for (const int j : model.active) {
    const std::string name = model.feature_names.empty()
                                 ? "feature" + std::to_string(j)
                                 : model.feature_names[static_cast<std::size_t>(j)];
    auto out = open_output(dir / ("coef_" + name + ".csv"));
    out << "t,value\n";
    const Eigen::VectorXd curve = reconstruct_coefficient_curve(
        model.coefficient_block(j), model.bases[static_cast<std::size_t>(j)]);
    for (int g = 0; g < model.grid.size(); ++g) {
      out << format_double(model.grid.points(g)) << ',' << format_double(curve(g)) << '\n';
    }
  }
}

struct ConfigCliOverrides {
  std::string config_path;
  int k = -1;
  int folds = -1;
  double alpha = -1.0;
  double tol = -1.0;
  long seed = -1;
  int threads = -1;
  int n_lambda = -1;
};

void add_config_options(CLI::App* cmd, ConfigCliOverrides& o) {
  cmd->add_option("--config", o.config_path, "configuration file (key = value lines)");
  cmd->add_option("--k", o.k, "FPC components per feature");
  cmd->add_option("--folds", o.folds, "cross-validation folds");
  cmd->add_option("--alpha", o.alpha, "elastic-net mixing (lambda2 = (1-alpha) lambda1)");
  cmd->add_option("--tol", o.tol, "solver KKT tolerance");
  cmd->add_option("--seed", o.seed, "random seed");
  cmd->add_option("--threads", o.threads, "worker threads (0 = hardware)");
  cmd->add_option("--n-lambda", o.n_lambda, "path grid size");
}

RunConfig resolve_config(const ConfigCliOverrides& o) {
  RunConfig config = o.config_path.empty() ? RunConfig{} : parse_config_file(o.config_path);
  if (o.k >= 0) {
    config.k = o.k;
  }
  if (o.folds >= 0) {
    config.folds = o.folds;
  }
  if (o.alpha >= 0.0) {
    config.alpha = o.alpha;
  }
  if (o.tol >= 0.0) {
    config.tol = o.tol;
  }
  if (o.seed >= 0) {
    config.seed = static_cast<std::uint64_t>(o.seed);
  }
  if (o.threads >= 0) {
    config.threads = o.threads;
  }
  if (o.n_lambda >= 0) {
    config.n_lambda = o.n_lambda;
  }
  config.validate();
  return config;
}

int cmd_fit(const std::string& features, const std::string& labels, const std::string& out_dir,
            const ConfigCliOverrides& overrides, bool solver_trace) {
  const RunConfig config = resolve_config(overrides);
  const Dataset dataset = read_dataset(features, labels);
  if (config.folds > dataset.panel.n()) {
    fail_config("folds (" + std::to_string(config.folds) + ") exceeds n (" +
                std::to_string(dataset.panel.n()) + ")");
  }
  const fs::path dir(out_dir);
  fs::create_directories(dir);

  const PipelineResult result = fit_pipeline(dataset.panel, dataset.labels, config);
  write_model(result.model, (dir / "model.fsfc").string());
  write_path_report(result.path, dir / "path_report.csv");
  write_coefficient_curves(result.model, dir);
  if (solver_trace) {
    auto out = open_output(dir / "solver_trace.csv");
    out << "outer,inner_steps,sigma,kkt_residual,active_count,psi\n";
    for (const OuterTraceEntry& e : result.refit.trace) {
      out << e.outer << ',' << e.inner_steps << ',' << format_double(e.sigma) << ','
          << format_double(e.kkt) << ',' << e.active_count << ',' << format_double(e.psi)
          << '\n';
    }
  }

  const PathEntry& selected =
      result.path.entries[static_cast<std::size_t>(result.path.selected_index)];
  std::cout << "selected lambda1 = " << format_double(result.model.lambda1)
            << " (c = " << format_double(selected.c) << ")\n";
  std::cout << "active features: " << result.model.active.size() << "\n";
  std::cout << "cv accuracy at selection: "
            << format_double(result.path.cv_mean(result.path.selected_index)) << "\n";
  std::cout << "model written to " << (dir / "model.fsfc").string() << "\n";
  if (!result.model.converged) {
    std::cerr << "error[NOT_CONVERGED]: selected fit did not reach the KKT tolerance; "
                 "artifacts were written\n";
    return kExitNotConverged;
  }
  return kExitOk;
}

int cmd_predict(const std::string& model_path, const std::string& features,
                const std::string& out_file) {
  const FittedModel model = read_model(model_path);
  const CurvePanel panel = read_features(features);
  const Prediction pred = predict(model, panel);
  auto out = open_output(out_file);
  out << "instance_id,probability,class\n";
  for (int i = 0; i < panel.n(); ++i) {
    const std::string id = panel.instance_ids.empty() ? "instance" + std::to_string(i)
                                                      : panel.instance_ids[static_cast<std::size_t>(i)];
    out << id << ',' << format_double(pred.probability(i)) << ','
        << (pred.label(i) > 0 ? 1 : -1) << '\n';
  }
  std::cout << "predictions written to " << out_file << "\n";
  return kExitOk;
}

int cmd_simulate(const ScenarioSpec& spec, const std::string& out_dir) {
  const ScenarioData data = generate_scenario(spec);
  const fs::path dir(out_dir);
  fs::create_directories(dir);
  write_features(data.train, (dir / "train_features.csv").string());
  write_labels(data.train, data.y_train, (dir / "train_labels.csv").string());
  write_features(data.test, (dir / "test_features.csv").string());
  write_labels(data.test, data.y_test, (dir / "test_labels.csv").string());

  auto truth = open_output(dir / "truth.csv");
  truth << "feature_id,t,value\n";
  for (const int j : data.support) {
    for (int g = 0; g < data.train.m(); ++g) {
      truth << data.train.feature_ids[static_cast<std::size_t>(j)] << ','
            << format_double(data.train.grid.points(g)) << ','
            << format_double(data.true_coefficients(j, g)) << '\n';
    }
  }
  std::cout << "scenario written to " << dir.string() << "\n";
  return kExitOk;
}

int cmd_bench(const ScenarioSpec& spec, int reps, const std::string& out_dir,
              const ConfigCliOverrides& overrides) {
  const RunConfig config = resolve_config(overrides);
  const fs::path dir(out_dir);
  fs::create_directories(dir);
  const BenchResult bench = run_replications(spec, reps, config);

  auto rows = open_output(dir / "replications.csv");
  rows << "rep,seed,status,precision,recall,train_accuracy,test_accuracy,"
          "selected_lambda1,active_count,wall_seconds,error\n";
  for (const ReplicationRow& r : bench.rows) {
    rows << r.rep << ',' << r.seed << ',' << (r.ok ? "ok" : "failed") << ','
         << format_double(r.precision) << ',' << format_double(r.recall) << ','
         << format_double(r.train_accuracy) << ',' << format_double(r.test_accuracy) << ','
         << format_double(r.selected_lambda1) << ',' << r.active_count << ','
         << format_double(r.wall_seconds) << ',' << r.error << '\n';
  }

  auto summary = open_output(dir / "summary.csv");
  summary << "metric,count,mean,sd,min,median,max\n";
  for (const MetricSummary& s : summarize(bench)) {
    summary << s.name << ',' << s.count << ',' << format_double(s.mean) << ','
            << format_double(s.sd) << ',' << format_double(s.min) << ','
            << format_double(s.median) << ',' << format_double(s.max) << '\n';
    std::cout << s.name << ": mean " << s.mean << " sd " << s.sd << "\n";
  }
  if (bench.failed > 0) {
    std::cerr << "error[NOT_CONVERGED]: " << bench.failed
              << " replication(s) failed; artifacts were written\n";
    return kExitNotConverged;
  }
  return kExitOk;
}

}  // namespace

int run_command(const std::vector<std::string>& args) {
  CLI::App app{"joint feature selection and classification for longitudinal features"};
  app.require_subcommand(1);

  // fit
  auto* fit = app.add_subcommand("fit", "fit a model from a long-format dataset");
  std::string fit_features, fit_labels, fit_out;
  bool fit_trace = false;
  ConfigCliOverrides fit_overrides;
  fit->add_option("--features", fit_features, "features CSV")->required();
  fit->add_option("--labels", fit_labels, "labels CSV")->required();
  fit->add_option("--out", fit_out, "output directory")->required();
  fit->add_flag("--solver-trace", fit_trace, "write the adaptive refit's solver trace");
  add_config_options(fit, fit_overrides);

  // predict
  auto* pred = app.add_subcommand("predict", "classify new instances with a fitted model");
  std::string pred_model, pred_features, pred_out;
  pred->add_option("--model", pred_model, "model file")->required();
  pred->add_option("--features", pred_features, "features CSV")->required();
  pred->add_option("--out", pred_out, "predictions CSV")->required();

  // simulate
  auto* sim = app.add_subcommand("simulate", "generate a synthetic scenario");
  ScenarioSpec sim_spec;
  long sim_seed = 0;
  std::string sim_out;
  sim->add_option("--n", sim_spec.n, "training instances")->required();
  sim->add_option("--p", sim_spec.p, "features")->required();
  sim->add_option("--p0", sim_spec.p0, "true active features")->required();
  sim->add_option("--seed", sim_seed, "random seed");
  sim->add_option("--m", sim_spec.grid_size, "grid points");
  sim->add_option("--ntest", sim_spec.n_test, "test instances (default n/3)");
  sim->add_option("--out", sim_out, "output directory")->required();

  // bench
  auto* bench = app.add_subcommand("bench", "replicate scenarios and report metrics");
  ScenarioSpec bench_spec;
  long bench_seed = 0;
  int bench_reps = 0;
  std::string bench_out;
  ConfigCliOverrides bench_overrides;
  bench->add_option("--n", bench_spec.n, "training instances")->required();
  bench->add_option("--p", bench_spec.p, "features")->required();
  bench->add_option("--p0", bench_spec.p0, "true active features")->required();
  bench->add_option("--reps", bench_reps, "replications")->required();
  bench->add_option("--m", bench_spec.grid_size, "grid points");
  bench->add_option("--ntest", bench_spec.n_test, "test instances (default n/3)");
  bench->add_option("--out", bench_out, "output directory")->required();
  bench->add_option("--bench-seed", bench_seed, "scenario seed");
  add_config_options(bench, bench_overrides);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    std::cout << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    std::cerr << "error[CONFIG_INVALID]: " << e.what() << "\n";
    return kExitConfig;
  }

  try {
    if (fit->parsed()) {
      return cmd_fit(fit_features, fit_labels, fit_out, fit_overrides, fit_trace);
    }
    if (pred->parsed()) {
      return cmd_predict(pred_model, pred_features, pred_out);
    }
    if (sim->parsed()) {
      sim_spec.seed = static_cast<std::uint64_t>(sim_seed);
      return cmd_simulate(sim_spec, sim_out);
    }
    if (bench->parsed()) {
      bench_spec.seed = static_cast<std::uint64_t>(bench_seed);
      if (bench_overrides.seed >= 0) {
        bench_spec.seed = static_cast<std::uint64_t>(bench_overrides.seed);
      }
      return cmd_bench(bench_spec, bench_reps, bench_out, bench_overrides);
    }
  } catch (const ConfigError& e) {
    std::cerr << "error[CONFIG_INVALID]: " << e.what() << "\n";
    return kExitConfig;
  } catch (const DataError& e) {
    std::cerr << "error[DATA_INVALID]: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "error[DATA_INVALID]: " << e.what() << "\n";
    return kExitData;
  }
  std::cerr << "error[CONFIG_INVALID]: no subcommand given\n";
  return kExitConfig;
}

}  // namespace fsfc
