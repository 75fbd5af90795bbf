#include "fsfc/csv_io.hpp"

#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>
#include <unordered_map>
#include <vector>

#include "fsfc/errors.hpp"
#include "fsfc/util.hpp"

namespace fsfc {

namespace {

std::string strip_cr(std::string line) {
  if (!line.empty() && line.back() == '\r') {
    line.pop_back();
  }
  return line;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::stringstream ss(line);
  while (std::getline(ss, field, ',')) {
    fields.push_back(field);
  }
  if (!line.empty() && line.back() == ',') {
    fields.emplace_back();
  }
  return fields;
}

double parse_double(const std::string& text, const std::string& what, long row) {
  const char* begin = text.c_str();
  char* end = nullptr;
  const double value = std::strtod(begin, &end);
  if (end == begin || *end != '\0') {
    throw DataError("cannot parse " + what + " '" + text + "' (row " + std::to_string(row) + ")");
  }
  return value;
}

}  // namespace

CurvePanel read_features(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw DataError("cannot open features file '" + path + "'");
  }
  std::string line;
  if (!std::getline(in, line) || strip_cr(line) != "instance_id,feature_id,t,value") {
    throw DataError("features file '" + path +
                    "' must start with header 'instance_id,feature_id,t,value'");
  }

  std::vector<std::string> instances;
  std::vector<std::string> features;
  std::unordered_map<std::string, int> instance_of;
  std::unordered_map<std::string, int> feature_of;
  struct Cell {
    double t;
    double value;
    long row;
  };
  // (feature, instance) -> observed points
  std::map<std::pair<int, int>, std::vector<Cell>> cells;
  std::map<double, int> grid_index;

  long row = 1;
  while (std::getline(in, line)) {
    ++row;
    line = strip_cr(line);
    if (line.empty()) {
      continue;
    }
    const auto fields = split_csv(line);
    if (fields.size() != 4) {
      throw DataError("expected 4 fields, got " + std::to_string(fields.size()) + " (row " +
                      std::to_string(row) + ")");
    }
    const auto [it_i, new_i] = instance_of.try_emplace(fields[0], static_cast<int>(instances.size()));
    if (new_i) {
      instances.push_back(fields[0]);
    }
    const auto [it_f, new_f] = feature_of.try_emplace(fields[1], static_cast<int>(features.size()));
    if (new_f) {
      features.push_back(fields[1]);
    }
    const double t = parse_double(fields[2], "t", row);
    const double value = parse_double(fields[3], "value", row);
    grid_index.try_emplace(t, 0);
    cells[{it_f->second, it_i->second}].push_back({t, value, row});
  }
  if (instances.empty()) {
    throw DataError("features file '" + path + "' has no data rows");
  }

  int g = 0;
  for (auto& [t, idx] : grid_index) {
    idx = g++;
  }
  const int m = g;
  Eigen::VectorXd points(m);
  for (const auto& [t, idx] : grid_index) {
    points(idx) = t;
  }
  if (m >= 3) {
    const double step = (points(m - 1) - points(0)) / static_cast<double>(m - 1);
    for (int i = 1; i < m; ++i) {
      if (std::abs(points(i) - points(i - 1) - step) > 1e-9) {
        throw DataError("grid is not uniform within 1e-9 (between t = " +
                        format_double(points(i - 1)) + " and t = " + format_double(points(i)) +
                        ")");
      }
    }
  }

  CurvePanel panel;
  panel.grid = TimeGrid::from_points(points);
  panel.instance_ids = instances;
  panel.feature_ids = features;
  const int n = static_cast<int>(instances.size());
  const int p = static_cast<int>(features.size());
  panel.features.assign(static_cast<std::size_t>(p), Eigen::MatrixXd::Zero(n, m));

  std::vector<char> seen(static_cast<std::size_t>(m));
  for (int j = 0; j < p; ++j) {
    for (int i = 0; i < n; ++i) {
      const auto it = cells.find({j, i});
      if (it == cells.end()) {
        throw DataError("instance '" + instances[static_cast<std::size_t>(i)] +
                        "' is missing feature '" + features[static_cast<std::size_t>(j)] + "'");
      }
      std::fill(seen.begin(), seen.end(), 0);
      for (const Cell& cell : it->second) {
        const int idx = grid_index.at(cell.t);
        if (seen[static_cast<std::size_t>(idx)]) {
          throw DataError("duplicate point for instance '" + instances[static_cast<std::size_t>(i)] +
                          "', feature '" + features[static_cast<std::size_t>(j)] + "' at t = " +
                          format_double(cell.t) + " (row " + std::to_string(cell.row) + ")");
        }
        seen[static_cast<std::size_t>(idx)] = 1;
        panel.features[static_cast<std::size_t>(j)](i, idx) = cell.value;
      }
      if (it->second.size() != static_cast<std::size_t>(m)) {
        for (int gg = 0; gg < m; ++gg) {
          if (!seen[static_cast<std::size_t>(gg)]) {
            throw DataError("instance '" + instances[static_cast<std::size_t>(i)] +
                            "', feature '" + features[static_cast<std::size_t>(j)] +
                            "' is missing t = " + format_double(points(gg)));
          }
        }
      }
    }
  }
  panel.validate();
  return panel;
}

Eigen::VectorXd read_labels(const std::string& path, const CurvePanel& panel) {
  std::ifstream in(path);
  if (!in) {
    throw DataError("cannot open labels file '" + path + "'");
  }
  std::string line;
  if (!std::getline(in, line) || strip_cr(line) != "instance_id,label") {
    throw DataError("labels file '" + path + "' must start with header 'instance_id,label'");
  }
  std::unordered_map<std::string, int> instance_of;
  for (int i = 0; i < panel.n(); ++i) {
    instance_of[panel.instance_ids[static_cast<std::size_t>(i)]] = i;
  }
  Eigen::VectorXd labels = Eigen::VectorXd::Zero(panel.n());
  std::vector<char> seen(static_cast<std::size_t>(panel.n()));
  long row = 1;
  while (std::getline(in, line)) {
    ++row;
    line = strip_cr(line);
    if (line.empty()) {
      continue;
    }
    const auto fields = split_csv(line);
    if (fields.size() != 2) {
      throw DataError("expected 2 fields, got " + std::to_string(fields.size()) + " (row " +
                      std::to_string(row) + ")");
    }
    const auto it = instance_of.find(fields[0]);
    if (it == instance_of.end()) {
      throw DataError("unknown instance id '" + fields[0] + "' (row " + std::to_string(row) + ")");
    }
    if (seen[static_cast<std::size_t>(it->second)]) {
      throw DataError("duplicate label for instance '" + fields[0] + "' (row " +
                      std::to_string(row) + ")");
    }
    seen[static_cast<std::size_t>(it->second)] = 1;
    const double label = parse_double(fields[1], "label", row);
    if (label != 1.0 && label != -1.0) {
      throw DataError("label must be -1 or 1, got '" + fields[1] + "' (row " +
                      std::to_string(row) + ")");
    }
    labels(it->second) = label;
  }
  for (int i = 0; i < panel.n(); ++i) {
    if (!seen[static_cast<std::size_t>(i)]) {
      throw DataError("missing label for instance '" +
                      panel.instance_ids[static_cast<std::size_t>(i)] + "'");
    }
  }
  return labels;
}

Dataset read_dataset(const std::string& features_path, const std::string& labels_path) {
  Dataset dataset;
  dataset.panel = read_features(features_path);
  if (dataset.panel.instance_ids.empty()) {
    throw DataError("features file lacks instance ids");
  }
  dataset.labels = read_labels(labels_path, dataset.panel);
  return dataset;
}

void write_features(const CurvePanel& panel, const std::string& path) {
  std::ofstream out(path);
  if (!out) {
    throw DataError("cannot write features file '" + path + "'");
  }
  out << "instance_id,feature_id,t,value\n";
  for (int j = 0; j < panel.p(); ++j) {
    for (int i = 0; i < panel.n(); ++i) {
      for (int g = 0; g < panel.m(); ++g) {
        out << panel.instance_ids[static_cast<std::size_t>(i)] << ','
            << panel.feature_ids[static_cast<std::size_t>(j)] << ','
            << format_double(panel.grid.points(g)) << ','
            << format_double(panel.features[static_cast<std::size_t>(j)](i, g)) << '\n';
      }
    }
  }
  if (!out) {
    throw DataError("failed while writing '" + path + "'");
  }
}

void write_labels(const CurvePanel& panel, const Eigen::VectorXd& labels,
                  const std::string& path) {
  std::ofstream out(path);
  if (!out) {
    throw DataError("cannot write labels file '" + path + "'");
  }
  out << "instance_id,label\n";
  for (int i = 0; i < panel.n(); ++i) {
    out << panel.instance_ids[static_cast<std::size_t>(i)] << ','
        << format_double(labels(i)) << '\n';
  }
  if (!out) {
    throw DataError("failed while writing '" + path + "'");
  }
}

}  // namespace fsfc
