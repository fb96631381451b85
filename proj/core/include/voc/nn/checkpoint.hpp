#pragma once

#include <string>
#include <vector>

#include "json.hpp"
#include "voc/nn/tensor.hpp"

namespace voc::nn {

/// Writes a parameter checkpoint: u32-framed JSON manifest (kind, hyper
/// section, tensor names + shapes) followed by the f64 little-endian blobs in
/// manifest order. Deterministic: nlohmann::json objects serialize with
/// sorted keys.
void save_checkpoint(const std::string& path, const std::string& kind,
                     const nlohmann::json& hyper, const std::vector<const Parameter*>& params);

/// Loads data back into an existing parameter list. The file's kind, tensor
/// names, and shapes must match exactly (order included); returns the hyper
/// section so the caller can cross-check its config.
nlohmann::json load_checkpoint(const std::string& path, const std::string& expected_kind,
                               const std::vector<Parameter*>& params);

/// Reads just the hyper section (to construct a model before loading).
nlohmann::json peek_checkpoint(const std::string& path, const std::string& expected_kind);

}  // namespace voc::nn
