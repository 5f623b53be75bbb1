#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "meibo/clinical.hpp"
#include "meibo/llm_client.hpp"
#include "meibo/summarizer.hpp"

namespace meibo::assembler {

using summarizer::QAPair;

/// Field masks of the training-variable ablation. Metadata is the base row:
/// it must be on whenever any other flag is on.
struct AblationConfig {
    bool include_metadata = true;
    bool include_morphology = true;
    bool include_mg_expression = true;
    bool include_real_diagnoses = true;

    void validate() const;
    friend bool operator==(const AblationConfig&, const AblationConfig&) = default;
};

nlohmann::json to_json(const AblationConfig& cfg);
AblationConfig ablation_from_json(const nlohmann::json& j);

/// Copy with morphology and MG expression dropped per the flags. Labels are kept.
clinical::ClinicalRecord apply_ablation(const clinical::ClinicalRecord& record, const AblationConfig& cfg);

struct Rejection {
    std::string id;
    std::string stage;
    std::string reason;
};

nlohmann::json to_json(const Rejection& r);

struct RenderResult {
    std::optional<QAPair> pair;
    std::string error;
};

/// Turns labeled records into Q&A pairs; result i belongs to records[i].
class Renderer {
public:
    virtual ~Renderer() = default;
    virtual std::string name() const = 0;
    virtual std::vector<RenderResult> render(const std::vector<clinical::ClinicalRecord>& records) const = 0;
};

class DeterministicRenderer : public Renderer {
public:
    explicit DeterministicRenderer(std::size_t workers = 0) : workers_(workers) {}
    std::string name() const override { return "deterministic"; }
    std::vector<RenderResult> render(const std::vector<clinical::ClinicalRecord>& records) const override;

private:
    std::size_t workers_;
};

/// Batches records into prompts, calls the endpoint, and matches completions
/// back to records by subject id. A completion whose extracted labels
/// disagree with the record is rejected.
class LlmRenderer : public Renderer {
public:
    explicit LlmRenderer(llm::EndpointConfig cfg, std::size_t batch_size = summarizer::kMaxRecordsPerRequest)
        : cfg_(std::move(cfg)), batch_size_(batch_size) {}
    std::string name() const override { return "llm"; }
    std::vector<RenderResult> render(const std::vector<clinical::ClinicalRecord>& records) const override;

private:
    llm::EndpointConfig cfg_;
    std::size_t batch_size_;
};

struct Assembled {
    std::vector<QAPair> pairs;
    std::vector<Rejection> rejected;
};

/// One pair per fully labeled record (ablated view), then trial-knowledge
/// pairs, then clinician pairs when include_real_diagnoses. Every input that
/// does not become a pair is itemized in `rejected`.
Assembled assemble(const std::vector<clinical::ClinicalRecord>& records, const std::vector<QAPair>& knowledge,
                   const AblationConfig& cfg, const Renderer& renderer);

enum class Grouping { BySubject, ByRecord };

std::string_view to_string(Grouping g);
std::optional<Grouping> parse_grouping(std::string_view s);

struct DatasetSplit {
    std::vector<QAPair> train;
    std::vector<QAPair> test;
    std::uint64_t seed = 0;
    double ratio = 0.9;
    Grouping grouping = Grouping::BySubject;
    /// Requested test size, llround(records * (1 - ratio)).
    std::size_t target_test = 0;
};

/// Knowledge pairs go to train. Record pairs are grouped (patient id or pair
/// id), groups are ordered by SHA-256 of seed and key, and whole groups are
/// moved to test until it holds at least the target count. At least one group
/// lands on each side. Throws with fewer than two groups.
DatasetSplit split(const std::vector<QAPair>& pairs, double ratio, std::uint64_t seed,
                   Grouping grouping = Grouping::BySubject);

nlohmann::json manifest_json(const DatasetSplit& split);
std::string manifest_hash(const DatasetSplit& split);

struct EmittedFiles {
    std::filesystem::path train;
    std::filesystem::path test;
    std::filesystem::path manifest;
};

nlohmann::json jsonl_line(const QAPair& pair, bool with_question_only);

/// Writes train.jsonl, test.jsonl and split_manifest.json into `dir`.
EmittedFiles emit_jsonl(const DatasetSplit& split, const std::filesystem::path& dir);

/// Inverse of emit_jsonl for one file.
std::vector<QAPair> read_jsonl(const std::filesystem::path& path);

}  // namespace meibo::assembler
