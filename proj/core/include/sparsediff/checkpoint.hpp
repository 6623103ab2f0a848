#pragma once

#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "sparsediff/autodiff.hpp"

namespace sparsediff::checkpoint {

struct CheckpointError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct CheckpointMeta {
  std::string module_id;
  std::string config_hash;
  nlohmann::json extra;  // free-form training metadata
};

/// Format: one magic/version line, one JSON header line (module id, config
/// hash, parameter shapes, metadata), then all parameters back to back as
/// little-endian float32.
void save_checkpoint(const std::string& path, const CheckpointMeta& meta,
                     const std::vector<ad::Var>& params);

/// Verifies the version, the module id, and (when `expect_hash` is
/// non-empty) the config hash, then fills the given parameters in place;
/// shapes must match exactly.
CheckpointMeta load_checkpoint(const std::string& path,
                               const std::string& expect_module,
                               const std::string& expect_hash,
                               const std::vector<ad::Var>& params);

/// Header-only read (no parameter blob), for dependency checks.
CheckpointMeta peek_checkpoint(const std::string& path);

bool checkpoint_exists(const std::string& path);

}  // namespace sparsediff::checkpoint
