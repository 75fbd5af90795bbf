#include "fsfc/run_config_io.hpp"

#include <cstdlib>
#include <fstream>

#include "fsfc/errors.hpp"

namespace fsfc {

namespace {

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string::npos) {
    return "";
  }
  const auto end = s.find_last_not_of(" \t\r");
  return s.substr(begin, end - begin + 1);
}

double to_double(const std::string& value, const std::string& context) {
  const char* begin = value.c_str();
  char* end = nullptr;
  const double v = std::strtod(begin, &end);
  if (end == begin || *end != '\0') {
    throw ConfigError("cannot parse number '" + value + "' " + context);
  }
  return v;
}

long to_long(const std::string& value, const std::string& context) {
  const char* begin = value.c_str();
  char* end = nullptr;
  const long v = std::strtol(begin, &end, 10);
  if (end == begin || *end != '\0') {
    throw ConfigError("cannot parse integer '" + value + "' " + context);
  }
  return v;
}

bool to_bool(const std::string& value, const std::string& context) {
  if (value == "true" || value == "1" || value == "yes") {
    return true;
  }
  if (value == "false" || value == "0" || value == "no") {
    return false;
  }
  throw ConfigError("cannot parse boolean '" + value + "' " + context);
}

}  // namespace

void apply_config_entry(RunConfig& config, const std::string& key, const std::string& value,
                        const std::string& context) {
  if (key == "k") {
    config.k = static_cast<int>(to_long(value, context));
  } else if (key == "alpha") {
    config.alpha = to_double(value, context);
  } else if (key == "n_lambda") {
    config.n_lambda = static_cast<int>(to_long(value, context));
  } else if (key == "tol") {
    config.tol = to_double(value, context);
  } else if (key == "mu") {
    config.mu = to_double(value, context);
  } else if (key == "folds") {
    config.folds = static_cast<int>(to_long(value, context));
  } else if (key == "seed") {
    config.seed = static_cast<std::uint64_t>(to_long(value, context));
  } else if (key == "max_outer") {
    config.max_outer = static_cast<int>(to_long(value, context));
  } else if (key == "max_inner") {
    config.max_inner = static_cast<int>(to_long(value, context));
  } else if (key == "max_linesearch_halvings") {
    config.max_linesearch_halvings = static_cast<int>(to_long(value, context));
  } else if (key == "threads") {
    config.threads = static_cast<int>(to_long(value, context));
  } else if (key == "cv_shared_basis") {
    config.cv_shared_basis = to_bool(value, context);
  } else {
    throw ConfigError("unknown configuration key '" + key + "' " + context);
  }
}

RunConfig parse_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw ConfigError("cannot open config file '" + path + "'");
  }
  RunConfig config;
  std::string line;
  long row = 0;
  while (std::getline(in, line)) {
    ++row;
    const auto hash = line.find('#');
    if (hash != std::string::npos) {
      line = line.substr(0, hash);
    }
    line = trim(line);
    if (line.empty()) {
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("expected 'key = value' in config file '" + path + "' (line " +
                        std::to_string(row) + ")");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    apply_config_entry(config, key, value,
                       "in config file '" + path + "' (line " + std::to_string(row) + ")");
  }
  config.validate();
  return config;
}

}  // namespace fsfc
