#pragma once

#include <string>

#include "fsfc/model_select.hpp"

namespace fsfc {

inline constexpr const char* kModelFormatVersion = "fsfc-model/1";

// Self-describing text format: version line, checksum of the payload, then
// key-value and array lines. Doubles are serialized with 17 significant
// digits so a round trip reproduces predictions bit for bit.
void write_model(const FittedModel& model, const std::string& path);

// Rejects version mismatches, checksum mismatches and truncated files with
// the offending line position.
FittedModel read_model(const std::string& path);

}  // namespace fsfc
