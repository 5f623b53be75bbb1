#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include <json.hpp>

#include "meibo/assembler.hpp"
#include "meibo/evaluator.hpp"
#include "meibo/llm_client.hpp"

namespace meibo::cli {

enum class RendererKind { Deterministic, Llm };

/// One batch run. Paths are stored as written in the config file and resolved
/// against `base_dir` (the config's directory) when used.
struct PipelineConfig {
    struct Paths {
        std::optional<std::string> masks_dir;
        std::optional<std::string> images_dir;
        std::string clinical_table;
        std::optional<std::string> trial_criteria;
        std::optional<std::string> clinician_cases;
        std::string output_dir;
    } paths;
    RendererKind renderer = RendererKind::Deterministic;
    llm::EndpointConfig endpoint;
    assembler::AblationConfig ablation;
    double split_ratio = 0.9;
    std::uint64_t split_seed = 0;
    assembler::Grouping grouping = assembler::Grouping::BySubject;
    eval::UnknownPolicy unknown_policy = eval::UnknownPolicy::CountAsWrong;

    std::filesystem::path base_dir;

    std::filesystem::path resolve(const std::string& p) const;
};

/// Parses without touching the filesystem; throws naming the offending field.
PipelineConfig config_from_json(const nlohmann::json& j, std::filesystem::path base_dir = {});
nlohmann::json to_json(const PipelineConfig& cfg);

PipelineConfig load_config(const std::filesystem::path& path);

/// Checks every referenced input path; throws "invalid_config" naming the field.
void validate_paths(const PipelineConfig& cfg);

}  // namespace meibo::cli
