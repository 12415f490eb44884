#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <variant>

#include "materia/corpus.hpp"
#include "materia/dataset.hpp"
#include "materia/gateway.hpp"

namespace materia {

using ConfigValue = std::variant<std::string, std::int64_t, double, bool>;

/// section -> key -> value; top-level keys live under "".
using ConfigTable = std::map<std::string, std::map<std::string, ConfigValue>>;

/// Parses the key-value subset of TOML used by project files: comments,
/// [section] headers, and key = "string" | integer | float | true/false.
/// Throws Error(ConfigError) naming the line.
ConfigTable parse_config_text(std::string_view text, const std::string& origin = "<config>");

struct ProjectConfig {
    std::filesystem::path corpus_dir = "corpus";
    std::filesystem::path templates_dir = "templates";
    std::filesystem::path providers_file = "providers.json";
    std::filesystem::path taxonomy_file = "taxonomy.json";
    std::filesystem::path store_path = "reviews.db";
    std::filesystem::path output_dir = "out";
    std::filesystem::path cache_dir = ".materia-cache/embeddings";
    SegmentationPolicy segmentation;
    GatewayPolicy gateway;

    std::string template_id = "extraction-default";
    std::string system_profile;  // enhanced-system profile id; empty for none
    std::string provider_id = "mock";
    std::string embed_provider_id = "mock-embed";
    std::size_t qa_count = 3;
    std::uint64_t seed = 0;

    DedupePolicy dedupe = DedupePolicy::Normalized;
    double validation_fraction = 0.0;
    std::uint64_t split_seed = 0;
    TrainConfigOverrides train;
};

/// Reads a project file; relative paths resolve against the file's directory.
/// Unknown keys are errors.
ProjectConfig load_project_config(const std::filesystem::path& path);
ProjectConfig project_config_from_text(std::string_view text, const std::filesystem::path& base_dir,
                                       const std::string& origin = "<config>");

}  // namespace materia
