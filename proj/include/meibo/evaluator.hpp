#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "meibo/clinical.hpp"
#include "meibo/labels.hpp"

namespace meibo::eval {

struct Extraction {
    DiseaseLabels labels;
    std::vector<std::string> notes;
};

/// Case-insensitive: each mention of a disease (full name or DE/MGD) takes the
/// nearest following yes/no token in the same sentence, stopping at the next
/// mention of a different disease. No match, or conflicting matches, leave the
/// disease Unknown (conflicts add a note). Total function.
Extraction extract_labels_with_notes(std::string_view raw_answer);
DiseaseLabels extract_labels(std::string_view raw_answer);

struct PredictionRecord {
    std::string id;
    std::string raw_answer;
    DiseaseLabels extracted;
    std::vector<std::string> extraction_notes;
};

PredictionRecord make_prediction(std::string id, std::string raw_answer);

/// Reads {"id","raw_answer"} lines.
std::vector<PredictionRecord> read_predictions(const std::filesystem::path& jsonl);

enum class UnknownPolicy { CountAsWrong, Exclude };

std::string_view to_string(UnknownPolicy p);
std::optional<UnknownPolicy> parse_policy(std::string_view s);

struct ConfusionCounts {
    long tp = 0, fp = 0, tn = 0, fn = 0;
    /// Unknown predictions, split by the truth they missed.
    long unknown_pos = 0, unknown_neg = 0;

    long unknown_pred() const { return unknown_pos + unknown_neg; }
    long scored() const { return tp + fp + tn + fn + unknown_pred(); }
};

struct DiseaseMetrics {
    ConfusionCounts counts;
    std::optional<double> accuracy, sensitivity, specificity, f1;
};

/// Positive class is "Yes". Zero denominators leave a metric undefined.
DiseaseMetrics compute_metrics(const ConfusionCounts& counts, UnknownPolicy policy);

struct EvalReport {
    std::string model_name;
    std::optional<nlohmann::json> ablation;  // AblationConfig as JSON
    std::string split_manifest_hash;
    UnknownPolicy policy = UnknownPolicy::CountAsWrong;
    std::map<Disease, DiseaseMetrics> diseases;
};

/// Throws when a prediction id is missing from truth or a truth label is
/// Unknown for a scored disease.
EvalReport score(const std::vector<PredictionRecord>& preds, const std::vector<clinical::ClinicalRecord>& truth,
                 UnknownPolicy policy = UnknownPolicy::CountAsWrong,
                 const std::vector<Disease>& diseases = {kAllDiseases.begin(), kAllDiseases.end()});

/// True when some scored disease had neither positive nor negative cases.
bool has_empty_disease(const EvalReport& report);

nlohmann::json to_json(const EvalReport& report);

enum class TableLayout { Comparison, Ablation };

struct RenderedTables {
    std::string text;
    std::string csv;
};

/// Percentages to one decimal; undefined metrics render as "-". Throws on an
/// empty list or when reports score different disease sets.
RenderedTables render_tables(const std::vector<EvalReport>& reports, TableLayout layout);

std::string format_percent(const std::optional<double>& v);

}  // namespace meibo::eval
