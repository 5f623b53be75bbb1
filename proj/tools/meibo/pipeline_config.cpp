#include "meibo/pipeline_config.hpp"

#include <fstream>
#include <set>

#include "meibo/error.hpp"

namespace meibo::cli {

using nlohmann::json;

namespace {

[[noreturn]] void bad(const std::string& field, const std::string& why) {
    throw Error("invalid_config", field + ": " + why);
}

std::string required_string(const json& obj, const char* key, const std::string& field) {
    auto it = obj.find(key);
    if (it == obj.end() || it->is_null()) bad(field, "required field is missing");
    if (!it->is_string() || it->get_ref<const std::string&>().empty()) bad(field, "must be a non-empty string");
    return it->get<std::string>();
}

std::optional<std::string> optional_string(const json& obj, const char* key, const std::string& field) {
    auto it = obj.find(key);
    if (it == obj.end() || it->is_null()) return std::nullopt;
    if (!it->is_string()) bad(field, "must be a string");
    return it->get<std::string>();
}

json opt(const std::optional<std::string>& s) { return s ? json(*s) : json(nullptr); }

}  // namespace

std::filesystem::path PipelineConfig::resolve(const std::string& p) const {
    std::filesystem::path path(p);
    if (path.is_absolute() || base_dir.empty()) return path;
    return base_dir / path;
}

PipelineConfig config_from_json(const json& j, std::filesystem::path base_dir) {
    if (!j.is_object()) bad("<root>", "config must be a JSON object");
    static const std::set<std::string> known = {"paths", "renderer", "endpoint", "ablation", "split", "evaluation"};
    for (const auto& [k, _] : j.items())
        if (!known.count(k)) bad(k, "unknown field");

    PipelineConfig cfg;
    cfg.base_dir = std::move(base_dir);

    auto paths = j.find("paths");
    if (paths == j.end() || !paths->is_object()) bad("paths", "required section is missing");
    cfg.paths.masks_dir = optional_string(*paths, "masks_dir", "paths.masks_dir");
    cfg.paths.images_dir = optional_string(*paths, "images_dir", "paths.images_dir");
    cfg.paths.clinical_table = required_string(*paths, "clinical_table", "paths.clinical_table");
    cfg.paths.trial_criteria = optional_string(*paths, "trial_criteria", "paths.trial_criteria");
    cfg.paths.clinician_cases = optional_string(*paths, "clinician_cases", "paths.clinician_cases");
    cfg.paths.output_dir = required_string(*paths, "output_dir", "paths.output_dir");
    if (cfg.paths.images_dir && !cfg.paths.masks_dir) bad("paths.images_dir", "requires paths.masks_dir");

    if (auto it = j.find("renderer"); it != j.end()) {
        if (*it == "deterministic") cfg.renderer = RendererKind::Deterministic;
        else if (*it == "llm") cfg.renderer = RendererKind::Llm;
        else bad("renderer", "expected \"deterministic\" or \"llm\"");
    }
    if (auto it = j.find("endpoint"); it != j.end()) {
        try {
            cfg.endpoint = llm::endpoint_from_json(*it);
        } catch (const Error& e) {
            bad("endpoint", e.what());
        }
    }
    if (auto it = j.find("ablation"); it != j.end()) {
        try {
            cfg.ablation = assembler::ablation_from_json(*it);
        } catch (const Error& e) {
            bad("ablation", e.what());
        }
    }
    if (auto it = j.find("split"); it != j.end()) {
        if (!it->is_object()) bad("split", "must be an object");
        if (auto r = it->find("ratio"); r != it->end()) {
            if (!r->is_number()) bad("split.ratio", "must be a number");
            cfg.split_ratio = r->get<double>();
        }
        if (!(cfg.split_ratio > 0.0 && cfg.split_ratio < 1.0)) bad("split.ratio", "must lie in (0, 1)");
        if (auto s = it->find("seed"); s != it->end()) {
            if (!s->is_number_integer() || (!s->is_number_unsigned() && s->get<long long>() < 0))
                bad("split.seed", "must be a non-negative integer");
            cfg.split_seed = s->get<std::uint64_t>();
        }
        if (auto g = it->find("grouping"); g != it->end()) {
            auto parsed = g->is_string() ? assembler::parse_grouping(g->get<std::string>()) : std::nullopt;
            if (!parsed) bad("split.grouping", "expected \"by_subject\" or \"by_record\"");
            cfg.grouping = *parsed;
        }
    }
    if (auto it = j.find("evaluation"); it != j.end()) {
        if (!it->is_object()) bad("evaluation", "must be an object");
        if (auto p = it->find("unknown_policy"); p != it->end()) {
            auto parsed = p->is_string() ? eval::parse_policy(p->get<std::string>()) : std::nullopt;
            if (!parsed) bad("evaluation.unknown_policy", "expected \"count_as_wrong\" or \"exclude\"");
            cfg.unknown_policy = *parsed;
        }
    }
    return cfg;
}

json to_json(const PipelineConfig& cfg) {
    return json{{"paths",
                 {{"masks_dir", opt(cfg.paths.masks_dir)},
                  {"images_dir", opt(cfg.paths.images_dir)},
                  {"clinical_table", cfg.paths.clinical_table},
                  {"trial_criteria", opt(cfg.paths.trial_criteria)},
                  {"clinician_cases", opt(cfg.paths.clinician_cases)},
                  {"output_dir", cfg.paths.output_dir}}},
                {"renderer", cfg.renderer == RendererKind::Llm ? "llm" : "deterministic"},
                {"endpoint", llm::to_json(cfg.endpoint)},
                {"ablation", assembler::to_json(cfg.ablation)},
                {"split",
                 {{"ratio", cfg.split_ratio},
                  {"seed", cfg.split_seed},
                  {"grouping", std::string(assembler::to_string(cfg.grouping))}}},
                {"evaluation", {{"unknown_policy", std::string(eval::to_string(cfg.unknown_policy))}}}};
}

PipelineConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("missing_file", "cannot open config " + path.string());
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& e) {
        throw Error("invalid_config", "config is not valid JSON: " + std::string(e.what()));
    }
    return config_from_json(j, std::filesystem::absolute(path).parent_path());
}

void validate_paths(const PipelineConfig& cfg) {
    namespace fs = std::filesystem;
    auto need_file = [&](const std::string& field, const std::string& p) {
        if (!fs::is_regular_file(cfg.resolve(p))) bad(field, "file not found: " + cfg.resolve(p).string());
    };
    auto need_dir = [&](const std::string& field, const std::string& p) {
        if (!fs::is_directory(cfg.resolve(p))) bad(field, "directory not found: " + cfg.resolve(p).string());
    };
    need_file("paths.clinical_table", cfg.paths.clinical_table);
    if (cfg.paths.masks_dir) need_dir("paths.masks_dir", *cfg.paths.masks_dir);
    if (cfg.paths.images_dir) need_dir("paths.images_dir", *cfg.paths.images_dir);
    if (cfg.paths.trial_criteria) need_file("paths.trial_criteria", *cfg.paths.trial_criteria);
    if (cfg.paths.clinician_cases) need_file("paths.clinician_cases", *cfg.paths.clinician_cases);
    const fs::path out = cfg.resolve(cfg.paths.output_dir);
    if (fs::exists(out) && !fs::is_directory(out)) bad("paths.output_dir", "exists and is not a directory");
}

}  // namespace meibo::cli
