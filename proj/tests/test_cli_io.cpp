#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "fsfc/commands.hpp"
#include "fsfc/csv_io.hpp"
#include "fsfc/errors.hpp"
#include "fsfc/model_io.hpp"
#include "fsfc/model_select.hpp"
#include "fsfc/run_config_io.hpp"
#include "fsfc/sim_lab.hpp"
#include "fsfc/util.hpp"

using namespace fsfc;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("fsfc_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  out << text;
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::vector<std::string>> read_csv(const fs::path& path) {
  std::ifstream in(path);
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) {
      fields.push_back(field);
    }
    rows.push_back(std::move(fields));
  }
  return rows;
}

FittedModel tiny_model(int seed = 61) {
  ScenarioSpec spec;
  spec.n = 30;
  spec.p = 3;
  spec.p0 = 1;
  spec.grid_size = 12;
  spec.seed = static_cast<std::uint64_t>(seed);
  RunConfig config;
  config.k = 2;
  config.n_lambda = 15;
  config.folds = 3;
  config.seed = 9;
  config.threads = 1;
  const ScenarioData data = generate_scenario(spec);
  return fit_pipeline(data.train, data.y_train, config).model;
}

}  // namespace

TEST_CASE("read_dataset: well-formed file") {
  const fs::path dir = fresh_dir("read_ok");
  write_text(dir / "f.csv",
             "instance_id,feature_id,t,value\n"
             "a,x,0,1.5\n"
             "a,x,0.5,2.5\n"
             "a,x,1,3.5\n"
             "b,x,1,6.5\n"
             "b,x,0,4.5\n"
             "b,x,0.5,5.5\n");
  write_text(dir / "l.csv", "instance_id,label\na,1\nb,-1\n");
  const Dataset dataset = read_dataset((dir / "f.csv").string(), (dir / "l.csv").string());
  CHECK(dataset.panel.n() == 2);
  CHECK(dataset.panel.p() == 1);
  CHECK(dataset.panel.m() == 3);
  CHECK(dataset.panel.instance_ids == std::vector<std::string>({"a", "b"}));
  CHECK(dataset.panel.features[0](0, 0) == 1.5);
  CHECK(dataset.panel.features[0](1, 1) == 5.5);  // rows may arrive unsorted
  CHECK(dataset.labels(0) == 1.0);
  CHECK(dataset.labels(1) == -1.0);
}

TEST_CASE("read_dataset: diagnostics for malformed input") {
  const fs::path dir = fresh_dir("read_bad");

  write_text(dir / "gap.csv",
             "instance_id,feature_id,t,value\n"
             "a,x,0,1\na,x,0.5,2\na,x,1,3\n"
             "b,x,0,4\nb,x,1,6\n");
  CHECK_THROWS_WITH_AS(read_features((dir / "gap.csv").string()),
                       doctest::Contains("missing t = 0.5"), DataError);

  write_text(dir / "dup.csv",
             "instance_id,feature_id,t,value\n"
             "a,x,0,1\na,x,1,3\na,x,1,9\n");
  CHECK_THROWS_WITH_AS(read_features((dir / "dup.csv").string()),
                       doctest::Contains("duplicate"), DataError);

  write_text(dir / "head.csv", "instance,feature,t,value\na,x,0,1\n");
  CHECK_THROWS_AS(read_features((dir / "head.csv").string()), DataError);

  write_text(dir / "nonuniform.csv",
             "instance_id,feature_id,t,value\n"
             "a,x,0,1\na,x,0.4,2\na,x,1,3\n");
  CHECK_THROWS_WITH_AS(read_features((dir / "nonuniform.csv").string()),
                       doctest::Contains("uniform"), DataError);

  write_text(dir / "f.csv",
             "instance_id,feature_id,t,value\n"
             "a,x,0,1\na,x,1,3\n");
  write_text(dir / "bad_label.csv", "instance_id,label\na,2\n");
  CHECK_THROWS_WITH_AS(read_dataset((dir / "f.csv").string(), (dir / "bad_label.csv").string()),
                       doctest::Contains("label must be -1 or 1"), DataError);
  write_text(dir / "unknown.csv", "instance_id,label\na,1\nzz,1\n");
  CHECK_THROWS_WITH_AS(read_dataset((dir / "f.csv").string(), (dir / "unknown.csv").string()),
                       doctest::Contains("unknown instance id"), DataError);
  write_text(dir / "missing.csv", "instance_id,label\n");
  CHECK_THROWS_WITH_AS(read_dataset((dir / "f.csv").string(), (dir / "missing.csv").string()),
                       doctest::Contains("missing label"), DataError);
}

TEST_CASE("dataset round trip is bit exact") {
  ScenarioSpec spec;
  spec.n = 8;
  spec.p = 2;
  spec.p0 = 1;
  spec.grid_size = 9;
  spec.seed = 21;
  const ScenarioData data = generate_scenario(spec);

  const fs::path dir = fresh_dir("roundtrip");
  write_features(data.train, (dir / "f.csv").string());
  write_labels(data.train, data.y_train, (dir / "l.csv").string());
  const Dataset back = read_dataset((dir / "f.csv").string(), (dir / "l.csv").string());
  CHECK(back.panel.n() == data.train.n());
  CHECK(back.panel.feature_ids == data.train.feature_ids);
  for (int j = 0; j < data.train.p(); ++j) {
    CHECK((back.panel.features[j] - data.train.features[j]).cwiseAbs().maxCoeff() == 0.0);
  }
  CHECK((back.labels - data.y_train).cwiseAbs().maxCoeff() == 0.0);
  CHECK((back.panel.grid.points - data.train.grid.points).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("model file round trip preserves predictions bit for bit") {
  const FittedModel model = tiny_model();
  const fs::path dir = fresh_dir("model_io");
  write_model(model, (dir / "m.fsfc").string());
  const FittedModel back = read_model((dir / "m.fsfc").string());

  CHECK(back.k == model.k);
  CHECK(back.lambda1 == model.lambda1);
  CHECK(back.active == model.active);
  CHECK((back.B - model.B).cwiseAbs().maxCoeff() == 0.0);

  ScenarioSpec probe_spec;
  probe_spec.n = 50;
  probe_spec.p = 3;
  probe_spec.p0 = 1;
  probe_spec.grid_size = 12;
  probe_spec.seed = 404;
  const ScenarioData probe = generate_scenario(probe_spec);
  const Prediction a = predict(model, probe.train);
  const Prediction b = predict(back, probe.train);
  CHECK((a.probability - b.probability).cwiseAbs().maxCoeff() == 0.0);
  CHECK((a.label - b.label).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("model file with zero active features round trips") {
  FittedModel model = tiny_model();
  model.active.clear();
  model.B.setZero();
  const fs::path dir = fresh_dir("model_empty");
  write_model(model, (dir / "m.fsfc").string());
  const FittedModel back = read_model((dir / "m.fsfc").string());
  CHECK(back.active.empty());
  CHECK(back.B.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("model file rejects tampering, version and truncation") {
  const FittedModel model = tiny_model();
  const fs::path dir = fresh_dir("model_bad");
  const fs::path path = dir / "m.fsfc";
  write_model(model, path.string());
  const std::string text = read_text(path);

  // flip one payload byte
  std::string tampered = text;
  tampered[tampered.size() / 2] =
      tampered[tampered.size() / 2] == '1' ? '2' : '1';
  write_text(dir / "tampered.fsfc", tampered);
  CHECK_THROWS_WITH_AS(read_model((dir / "tampered.fsfc").string()),
                       doctest::Contains("checksum"), DataError);

  std::string wrong_version = text;
  wrong_version.replace(0, std::string("fsfc-model/1").size(), "fsfc-model/9");
  write_text(dir / "version.fsfc", wrong_version);
  CHECK_THROWS_WITH_AS(read_model((dir / "version.fsfc").string()),
                       doctest::Contains("unsupported format"), DataError);

  // drop the trailing "end" line (keep the checksum consistent to isolate the
  // truncation diagnostic)
  const auto end_pos = text.rfind("end\n");
  std::string truncated = text.substr(0, end_pos);
  write_text(dir / "trunc.fsfc", truncated);
  CHECK_THROWS_AS(read_model((dir / "trunc.fsfc").string()), DataError);
}

TEST_CASE("config files parse with defaults and strict keys") {
  const RunConfig defaults;
  CHECK(defaults.k == 5);
  CHECK(defaults.alpha == 0.2);
  CHECK(defaults.n_lambda == 100);
  CHECK(defaults.tol == 1e-4);
  CHECK(defaults.mu == 0.2);
  CHECK(defaults.folds == 5);

  const fs::path dir = fresh_dir("config");
  write_text(dir / "c.conf",
             "# comment\n"
             "k = 3\n"
             "alpha = 0.5\n"
             "seed = 77\n"
             "cv_shared_basis = true\n"
             "threads = 2   # trailing comment\n");
  const RunConfig parsed = parse_config_file((dir / "c.conf").string());
  CHECK(parsed.k == 3);
  CHECK(parsed.alpha == 0.5);
  CHECK(parsed.seed == 77);
  CHECK(parsed.cv_shared_basis);
  CHECK(parsed.threads == 2);
  CHECK(parsed.tol == 1e-4);

  write_text(dir / "bad.conf", "verbosity = 3\n");
  CHECK_THROWS_WITH_AS(parse_config_file((dir / "bad.conf").string()),
                       doctest::Contains("unknown configuration key"), ConfigError);
  write_text(dir / "invalid.conf", "mu = 0.7\n");
  CHECK_THROWS_AS(parse_config_file((dir / "invalid.conf").string()), ConfigError);
  write_text(dir / "noeq.conf", "k 3\n");
  CHECK_THROWS_AS(parse_config_file((dir / "noeq.conf").string()), ConfigError);
}

TEST_CASE("cli: simulate, fit, predict end to end") {
  const fs::path dir = fresh_dir("cli_e2e");
  const std::string sim_dir = (dir / "sim").string();
  CHECK(run_command({"simulate", "--n", "30", "--p", "3", "--p0", "1", "--m", "12", "--seed",
                     "5", "--out", sim_dir}) == kExitOk);
  CHECK(fs::exists(fs::path(sim_dir) / "train_features.csv"));
  CHECK(fs::exists(fs::path(sim_dir) / "truth.csv"));

  const std::string fit_dir = (dir / "fit").string();
  CHECK(run_command({"fit", "--features", sim_dir + "/train_features.csv", "--labels",
                     sim_dir + "/train_labels.csv", "--out", fit_dir, "--k", "2", "--folds",
                     "3", "--n-lambda", "15", "--seed", "1", "--threads", "1"}) == kExitOk);
  CHECK(fs::exists(fs::path(fit_dir) / "model.fsfc"));
  CHECK(fs::exists(fs::path(fit_dir) / "path_report.csv"));

  // active-count bookkeeping matches the emitted coefficient-curve files
  const FittedModel model = read_model((fs::path(fit_dir) / "model.fsfc").string());
  int coef_files = 0;
  for (const auto& entry : fs::directory_iterator(fit_dir)) {
    if (entry.path().filename().string().rfind("coef_", 0) == 0) {
      ++coef_files;
    }
  }
  CHECK(coef_files == static_cast<int>(model.active.size()));

  const std::string pred_file = (dir / "pred.csv").string();
  CHECK(run_command({"predict", "--model", fit_dir + "/model.fsfc", "--features",
                     sim_dir + "/test_features.csv", "--out", pred_file}) == kExitOk);
  const auto rows = read_csv(pred_file);
  CHECK(rows.size() == 11);  // header + n/3 = 10 test instances
  CHECK(rows[0] == std::vector<std::string>({"instance_id", "probability", "class"}));
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const double prob = std::stod(rows[r][1]);
    CHECK(prob >= 0.0);
    CHECK(prob <= 1.0);
    CHECK((rows[r][2] == "1" || rows[r][2] == "-1"));
  }
}

TEST_CASE("cli: error paths and exit codes") {
  const fs::path dir = fresh_dir("cli_err");
  const std::string sim_dir = (dir / "sim").string();
  REQUIRE(run_command({"simulate", "--n", "8", "--p", "2", "--p0", "1", "--m", "10", "--seed",
                       "3", "--out", sim_dir}) == kExitOk);

  // contradictory flags: folds > n
  CHECK(run_command({"fit", "--features", sim_dir + "/train_features.csv", "--labels",
                     sim_dir + "/train_labels.csv", "--out", (dir / "fit").string(), "--folds",
                     "10", "--k", "2"}) == kExitConfig);

  // missing file
  CHECK(run_command({"fit", "--features", sim_dir + "/nope.csv", "--labels",
                     sim_dir + "/train_labels.csv", "--out", (dir / "fit").string()}) ==
        kExitData);

  // unknown flag / missing subcommand
  CHECK(run_command({"fit", "--bogus", "1"}) == kExitConfig);
  CHECK(run_command({}) == kExitConfig);
  CHECK(run_command({"frobnicate"}) == kExitConfig);

  // non-convergence still writes artifacts and exits 4
  write_text(dir / "starved.conf", "max_outer = 1\ntol = 1e-12\nk = 2\nfolds = 3\nn_lambda = 8\n");
  const std::string sim2 = (dir / "sim2").string();
  REQUIRE(run_command({"simulate", "--n", "24", "--p", "2", "--p0", "1", "--m", "10", "--seed",
                       "11", "--out", sim2}) == kExitOk);
  const int code = run_command({"fit", "--features", sim2 + "/train_features.csv", "--labels",
                                sim2 + "/train_labels.csv", "--out", (dir / "starved").string(),
                                "--config", (dir / "starved.conf").string()});
  CHECK(code == kExitNotConverged);
  CHECK(fs::exists(dir / "starved" / "model.fsfc"));
  CHECK(fs::exists(dir / "starved" / "path_report.csv"));
}

TEST_CASE("cli: bench summary matches recomputation from the per-rep rows") {
  const fs::path dir = fresh_dir("cli_bench");
  const std::string out = (dir / "bench").string();
  CHECK(run_command({"bench", "--n", "24", "--p", "3", "--p0", "1", "--m", "10", "--reps", "3",
                     "--bench-seed", "17", "--out", out, "--k", "2", "--folds", "3",
                     "--n-lambda", "10", "--threads", "1"}) == kExitOk);

  const auto rows = read_csv(fs::path(out) / "replications.csv");
  const auto summary = read_csv(fs::path(out) / "summary.csv");
  REQUIRE(rows.size() == 4);
  REQUIRE(summary.size() == 6);

  // column 3 is precision, 4 recall, 5 train_accuracy, 6 test_accuracy
  const std::vector<std::pair<std::string, int>> columns = {
      {"precision", 3}, {"recall", 4}, {"train_accuracy", 5}, {"test_accuracy", 6}};
  for (const auto& [name, col] : columns) {
    double mean = 0.0;
    for (std::size_t r = 1; r < rows.size(); ++r) {
      mean += std::stod(rows[r][static_cast<std::size_t>(col)]);
    }
    mean /= 3.0;
    bool found = false;
    for (std::size_t r = 1; r < summary.size(); ++r) {
      if (summary[r][0] == name) {
        CHECK(std::abs(std::stod(summary[r][2]) - mean) < 1e-12);
        found = true;
      }
    }
    CHECK(found);
  }
}
