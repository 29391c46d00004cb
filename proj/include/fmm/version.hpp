#pragma once

#include <string>

namespace fmm {

inline constexpr const char* kToolVersion = "0.1.0";

/// FNV-1a hash of a canonical config dump, hex-encoded. Embedded in output
/// files so results can be traced back to the exact configuration.
std::string config_hash(const std::string& canonical_config);

}  // namespace fmm
