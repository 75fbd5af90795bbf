#include "fsfc/model_io.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>
#include <vector>

#include "fsfc/errors.hpp"
#include "fsfc/util.hpp"

namespace fsfc {

namespace {

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

void append_vector(std::ostringstream& out, const char* tag, const Eigen::VectorXd& values) {
  out << tag;
  for (Eigen::Index i = 0; i < values.size(); ++i) {
    out << ' ' << format_double(values(i));
  }
  out << '\n';
}

class ModelParser {
 public:
  ModelParser(std::string text, long first_line)
      : stream_(std::move(text)), line_number_(first_line - 1) {}

  bool next_line() {
    if (!std::getline(stream_, line_)) {
      return false;
    }
    ++line_number_;
    if (!line_.empty() && line_.back() == '\r') {
      line_.pop_back();
    }
    tokens_.clear();
    std::stringstream ss(line_);
    std::string tok;
    while (ss >> tok) {
      tokens_.push_back(tok);
    }
    return true;
  }

  [[noreturn]] void fail(const std::string& message) const {
    throw DataError("model file: " + message + " (line " + std::to_string(line_number_) + ")");
  }

  const std::vector<std::string>& tokens() const { return tokens_; }
  long line_number() const { return line_number_; }

  void expect_key(const std::string& key, std::size_t values) {
    if (tokens_.empty() || tokens_[0] != key || tokens_.size() != values + 1) {
      fail("expected '" + key + "' with " + std::to_string(values) + " value(s)");
    }
  }

  double as_double(std::size_t idx) const {
    const char* begin = tokens_[idx].c_str();
    char* end = nullptr;
    const double v = std::strtod(begin, &end);
    if (end == begin || *end != '\0') {
      fail("cannot parse number '" + tokens_[idx] + "'");
    }
    return v;
  }

  long as_long(std::size_t idx) const {
    const char* begin = tokens_[idx].c_str();
    char* end = nullptr;
    const long v = std::strtol(begin, &end, 10);
    if (end == begin || *end != '\0') {
      fail("cannot parse integer '" + tokens_[idx] + "'");
    }
    return v;
  }

  Eigen::VectorXd as_vector(std::size_t from, Eigen::Index count) const {
    if (tokens_.size() != from + static_cast<std::size_t>(count)) {
      fail("expected " + std::to_string(count) + " values, got " +
           std::to_string(tokens_.size() - from));
    }
    Eigen::VectorXd out(count);
    for (Eigen::Index i = 0; i < count; ++i) {
      out(i) = as_double(from + static_cast<std::size_t>(i));
    }
    return out;
  }

  void require_line(const std::string& key) {
    if (!next_line()) {
      throw DataError("model file: truncated before '" + key + "' (line " +
                      std::to_string(line_number_ + 1) + ")");
    }
  }

 private:
  std::istringstream stream_;
  std::string line_;
  std::vector<std::string> tokens_;
  long line_number_;
};

}  // namespace

void write_model(const FittedModel& model, const std::string& path) {
  const int p = model.p();
  const int m = model.grid.size();
  std::ostringstream payload;
  payload << "k " << model.k << '\n';
  payload << "alpha " << format_double(model.alpha) << '\n';
  payload << "lambda1 " << format_double(model.lambda1) << '\n';
  payload << "lambda2 " << format_double(model.lambda2) << '\n';
  payload << "p " << p << '\n';
  payload << "m " << m << '\n';
  payload << "n_train " << model.trained_n << '\n';
  payload << "folds " << model.folds << '\n';
  payload << "seed " << model.seed << '\n';
  payload << "cv_shared_basis " << (model.cv_shared_basis ? 1 : 0) << '\n';
  payload << "converged " << (model.converged ? 1 : 0) << '\n';
  append_vector(payload, "grid", model.grid.points);
  payload << "active";
  for (const int j : model.active) {
    payload << ' ' << j;
  }
  payload << '\n';
  for (int j = 0; j < p; ++j) {
    const std::string name = model.feature_names.empty()
                                 ? "feature" + std::to_string(j)
                                 : model.feature_names[static_cast<std::size_t>(j)];
    payload << "feature " << j << " id " << name << '\n';
    payload << "feature " << j << " omega " << format_double(model.omega(j)) << '\n';
    append_vector(payload, ("feature " + std::to_string(j) + " mean").c_str(),
                  model.mean_curves.row(j).transpose());
    append_vector(payload, ("feature " + std::to_string(j) + " sd").c_str(),
                  model.sd_curves.row(j).transpose());
    const FpcBasis& basis = model.bases[static_cast<std::size_t>(j)];
    append_vector(payload, ("feature " + std::to_string(j) + " eigenvalues").c_str(),
                  basis.eigenvalues);
    for (int s = 0; s < model.k; ++s) {
      append_vector(payload,
                    ("feature " + std::to_string(j) + " ef " + std::to_string(s)).c_str(),
                    basis.eigenfunctions.row(s).transpose());
    }
    append_vector(payload, ("feature " + std::to_string(j) + " coef").c_str(),
                  model.coefficient_block(j));
  }
  payload << "end\n";

  const std::string body = payload.str();
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw DataError("cannot write model file '" + path + "'");
  }
  out << kModelFormatVersion << '\n';
  out << "checksum " << hex64(fnv1a64(body.data(), body.size())) << '\n';
  out << body;
  if (!out) {
    throw DataError("failed while writing '" + path + "'");
  }
}

FittedModel read_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw DataError("cannot open model file '" + path + "'");
  }
  std::string version;
  if (!std::getline(in, version)) {
    throw DataError("model file: empty file (line 1)");
  }
  if (!version.empty() && version.back() == '\r') {
    version.pop_back();
  }
  if (version != kModelFormatVersion) {
    throw DataError("model file: unsupported format '" + version + "', expected '" +
                    std::string(kModelFormatVersion) + "' (line 1)");
  }
  std::string checksum_line;
  if (!std::getline(in, checksum_line)) {
    throw DataError("model file: missing checksum (line 2)");
  }
  std::stringstream cs(checksum_line);
  std::string key, digest;
  cs >> key >> digest;
  if (key != "checksum" || digest.size() != 16) {
    throw DataError("model file: malformed checksum line (line 2)");
  }
  std::string body((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (hex64(fnv1a64(body.data(), body.size())) != digest) {
    throw DataError("model file: checksum mismatch (line 2)");
  }

  ModelParser parser(std::move(body), 3);
  FittedModel model;

  parser.require_line("k");
  parser.expect_key("k", 1);
  model.k = static_cast<int>(parser.as_long(1));
  parser.require_line("alpha");
  parser.expect_key("alpha", 1);
  model.alpha = parser.as_double(1);
  parser.require_line("lambda1");
  parser.expect_key("lambda1", 1);
  model.lambda1 = parser.as_double(1);
  parser.require_line("lambda2");
  parser.expect_key("lambda2", 1);
  model.lambda2 = parser.as_double(1);
  parser.require_line("p");
  parser.expect_key("p", 1);
  const int p = static_cast<int>(parser.as_long(1));
  parser.require_line("m");
  parser.expect_key("m", 1);
  const int m = static_cast<int>(parser.as_long(1));
  if (model.k < 1 || p < 1 || m < 2) {
    parser.fail("invalid dimensions");
  }
  parser.require_line("n_train");
  parser.expect_key("n_train", 1);
  model.trained_n = static_cast<int>(parser.as_long(1));
  parser.require_line("folds");
  parser.expect_key("folds", 1);
  model.folds = static_cast<int>(parser.as_long(1));
  parser.require_line("seed");
  parser.expect_key("seed", 1);
  model.seed = static_cast<std::uint64_t>(parser.as_long(1));
  parser.require_line("cv_shared_basis");
  parser.expect_key("cv_shared_basis", 1);
  model.cv_shared_basis = parser.as_long(1) != 0;
  parser.require_line("converged");
  parser.expect_key("converged", 1);
  model.converged = parser.as_long(1) != 0;

  parser.require_line("grid");
  if (parser.tokens().empty() || parser.tokens()[0] != "grid") {
    parser.fail("expected 'grid'");
  }
  model.grid = TimeGrid::from_points(parser.as_vector(1, m));

  parser.require_line("active");
  if (parser.tokens().empty() || parser.tokens()[0] != "active") {
    parser.fail("expected 'active'");
  }
  for (std::size_t i = 1; i < parser.tokens().size(); ++i) {
    const long j = parser.as_long(i);
    if (j < 0 || j >= p) {
      parser.fail("active index out of range");
    }
    model.active.push_back(static_cast<int>(j));
  }

  model.mean_curves.resize(p, m);
  model.sd_curves.resize(p, m);
  model.omega.resize(p);
  model.B = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(p) * model.k);
  model.bases.resize(static_cast<std::size_t>(p));
  model.feature_names.resize(static_cast<std::size_t>(p));

  const auto expect_feature = [&](int j, const std::string& field, std::size_t values) {
    parser.require_line("feature " + std::to_string(j) + " " + field);
    const auto& t = parser.tokens();
    if (t.size() < 4 || t[0] != "feature" || t[1] != std::to_string(j) || t[2] != field ||
        (values > 0 && t.size() != 3 + values)) {
      parser.fail("expected 'feature " + std::to_string(j) + " " + field + "'");
    }
  };

  for (int j = 0; j < p; ++j) {
    expect_feature(j, "id", 0);  // names may contain spaces
    std::string name = parser.tokens()[3];
    for (std::size_t t = 4; t < parser.tokens().size(); ++t) {
      name += " " + parser.tokens()[t];
    }
    model.feature_names[static_cast<std::size_t>(j)] = name;
    expect_feature(j, "omega", 1);
    model.omega(j) = parser.as_double(3);
    expect_feature(j, "mean", static_cast<std::size_t>(m));
    model.mean_curves.row(j) = parser.as_vector(3, m).transpose();
    expect_feature(j, "sd", static_cast<std::size_t>(m));
    model.sd_curves.row(j) = parser.as_vector(3, m).transpose();

    FpcBasis& basis = model.bases[static_cast<std::size_t>(j)];
    basis.feature_index = j;
    basis.k = model.k;
    basis.grid = model.grid;
    basis.eigenfunctions.resize(model.k, m);
    expect_feature(j, "eigenvalues", static_cast<std::size_t>(model.k));
    basis.eigenvalues = parser.as_vector(3, model.k);
    for (int s = 0; s < model.k; ++s) {
      parser.require_line("feature ef");
      const auto& t = parser.tokens();
      if (t.size() != 4 + static_cast<std::size_t>(m) || t[0] != "feature" ||
          t[1] != std::to_string(j) || t[2] != "ef" || t[3] != std::to_string(s)) {
        parser.fail("expected 'feature " + std::to_string(j) + " ef " + std::to_string(s) + "'");
      }
      basis.eigenfunctions.row(s) = parser.as_vector(4, m).transpose();
    }
    expect_feature(j, "coef", static_cast<std::size_t>(model.k));
    model.B.segment(static_cast<Eigen::Index>(j) * model.k, model.k) =
        parser.as_vector(3, model.k);
  }

  parser.require_line("end");
  if (parser.tokens().size() != 1 || parser.tokens()[0] != "end") {
    parser.fail("expected terminating 'end'");
  }
  return model;
}

}  // namespace fsfc
