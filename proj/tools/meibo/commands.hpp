#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "meibo/assembler.hpp"
#include "meibo/clinical.hpp"
#include "meibo/error.hpp"
#include "meibo/morphometry.hpp"
#include "meibo/pipeline_config.hpp"

namespace meibo::cli {

/// Fatal error of one pipeline stage.
class StageError : public Error {
public:
    StageError(std::string stage, const Error& cause)
        : Error(cause.code(), "stage " + stage + ": " + cause.what()), stage_(std::move(stage)) {}
    const std::string& stage() const noexcept { return stage_; }

private:
    std::string stage_;
};

struct QuantifyReport {
    std::vector<std::filesystem::path> outputs;
    /// [{"file", "error", "message"}] for masks that could not be processed.
    nlohmann::json failures = nlohmann::json::array();
};

/// Every `<stem>.png` in masks_dir with a `<stem>.json` sidecar is quantified;
/// `<stem>.png` in images_dir, when present, supplies intensities. Writes
/// `<subject_eye_id>.json` and failures.json into out_dir. Per-file failures
/// are collected; an input-free directory throws "no inputs".
QuantifyReport quantify_dir(const std::filesystem::path& masks_dir, const std::optional<std::filesystem::path>& images_dir,
                            const std::filesystem::path& out_dir, std::size_t workers = 0);

/// Reads the morphology JSON files written by quantify_dir.
std::vector<morph::EyelidMorphology> load_morphology_dir(const std::filesystem::path& dir);

struct KnowledgeLoad {
    std::vector<summarizer::QAPair> pairs;
    std::vector<assembler::Rejection> rejected;
};

KnowledgeLoad load_knowledge(const std::optional<std::filesystem::path>& criteria,
                             const std::optional<std::filesystem::path>& cases);

/// Clinical table (CSV/JSON) or a records.json written by `ingest`.
std::vector<clinical::ClinicalRecord> load_records(const std::filesystem::path& path);

struct PipelineResult {
    std::filesystem::path output_dir;
    std::size_t train = 0;
    std::size_t test = 0;
    std::size_t rejected = 0;
};

/// Runs quantify (when masks are configured), ingest, knowledge, assemble,
/// split and emit in that order. Outputs are staged in a sibling temporary
/// directory and renamed over output_dir only when every stage succeeded.
PipelineResult run_pipeline(const PipelineConfig& cfg, bool offline, std::ostream* progress = nullptr);

/// Entry point for the `meibo` executable. Errors are reported on `err` as a
/// single JSON object and yield a nonzero return.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace meibo::cli
