#pragma once

#include <Eigen/Dense>
#include <string>

#include "fsfc/func_data.hpp"

namespace fsfc {

struct Dataset {
  CurvePanel panel;
  Eigen::VectorXd labels;
};

// Long-format features file with header `instance_id,feature_id,t,value`.
// Instances and features keep first-appearance order; the grid is inferred,
// must cover [0, 1], and must be uniform within 1e-9. Every (instance,
// feature) pair must cover the full grid exactly once.
CurvePanel read_features(const std::string& path);

// Label file with header `instance_id,label`; one row per panel instance,
// labels in {-1, 1}.
Eigen::VectorXd read_labels(const std::string& path, const CurvePanel& panel);

Dataset read_dataset(const std::string& features_path, const std::string& labels_path);

void write_features(const CurvePanel& panel, const std::string& path);
void write_labels(const CurvePanel& panel, const Eigen::VectorXd& labels,
                  const std::string& path);

}  // namespace fsfc
