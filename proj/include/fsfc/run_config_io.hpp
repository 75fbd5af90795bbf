#pragma once

#include <string>

#include "fsfc/model_select.hpp"

namespace fsfc {

// Flat `key = value` configuration file with `#` comments. Unknown keys are
// rejected. Keys: k, alpha, n_lambda, tol, mu, folds, seed, max_outer,
// max_inner, max_linesearch_halvings, threads, cv_shared_basis.
RunConfig parse_config_file(const std::string& path);

void apply_config_entry(RunConfig& config, const std::string& key, const std::string& value,
                        const std::string& context);

}  // namespace fsfc
