#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <string_view>

#include "json.hpp"

#include "fedsel/engine.hpp"

namespace fedsel {

/// Parses a configuration document. Unknown keys and wrongly typed values
/// are rejected with the dotted path of the offending field. Sub-seeds that
/// are absent are derived from the master `seed`.
ExperimentConfig config_from_json(const nlohmann::json& doc);

/// Every effective value, defaults included. Feeding the result back through
/// config_from_json yields the same configuration.
nlohmann::json config_to_json(const ExperimentConfig& config);

/// Applies `dotted.path=value`. The value is parsed as JSON when possible and
/// taken as a plain string otherwise; missing intermediate objects are created.
void apply_override(nlohmann::json& doc, std::string_view assignment);

nlohmann::json read_json_file(const std::filesystem::path& path);

ExperimentConfig load_config(const std::filesystem::path& path, std::span<const std::string> overrides = {});

}  // namespace fedsel
