#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "meibo/clinical.hpp"
#include "meibo/labels.hpp"

namespace meibo::summarizer {

enum class QASource { SummarizerLlm, DeterministicTemplate, TrialKnowledge, ClinicianCase };

std::string_view to_string(QASource s);
std::optional<QASource> parse_source(std::string_view s);

/// One "###Human / ###Assistant" example.
struct QAPair {
    std::string id;
    std::string question;
    std::string answer;
    QASource source = QASource::DeterministicTemplate;
    DiseaseLabels labels;
    /// Rendered from a record without definite labels; answer is empty.
    bool inference_only = false;
    /// Question carries a morphology narrative (image+metadata instance).
    bool has_morphology = false;

    bool is_knowledge() const { return source == QASource::TrialKnowledge || source == QASource::ClinicianCase; }
};

inline constexpr std::string_view kHumanMarker = "###Human:";
inline constexpr std::string_view kAssistantMarker = "###Assistant:";
inline constexpr std::string_view kMetadataRequest = "Could you give a clinical report summary of the data?";

/// "###Human: <question>\n###Assistant: <answer>"
std::string format_pair(const QAPair& pair);

/// format_pair with the assistant body stripped, ready for inference.
std::string format_question_only(const QAPair& pair);

/// JSONL line form {"id","question","answer","source"}.
nlohmann::json to_json(const QAPair& pair);

// --- prompt -----------------------------------------------------------------

struct ChatMessage {
    std::string role;
    std::string content;
};

struct PromptBundle {
    std::string task_description;
    std::vector<std::string> supporting_examples;
    std::string metadata_payload;
    /// Subject ids in payload order, for re-association of completions.
    std::vector<std::string> subject_ids;

    /// Task description, then examples, then payload.
    std::string as_text() const;
    /// System message carries the task description; one user message the rest.
    std::vector<ChatMessage> messages() const;
};

const std::string& task_description();
const std::string& default_supporting_example();

/// Compact metadata object keyed by subject id:
/// {"42_2_R": {"gender": "Male", "age": 30, ..., "MG_Morph": {...}, "Dry Eye": "Yes", ...}}
nlohmann::ordered_json metadata_json(const std::vector<clinical::ClinicalRecord>& records);
std::string serialize_metadata(const std::vector<clinical::ClinicalRecord>& records);

/// Inverse of metadata_json.
std::vector<clinical::ClinicalRecord> records_from_metadata(const nlohmann::ordered_json& payload);

/// Throws when records is empty. `examples` defaults to the 42_2_R example.
PromptBundle build_prompt(const std::vector<clinical::ClinicalRecord>& records,
                          std::optional<std::vector<std::string>> examples = std::nullopt);

inline constexpr std::size_t kMaxRecordsPerRequest = 8;

/// Splits records into consecutive groups of at most `batch_size`.
std::vector<std::vector<clinical::ClinicalRecord>> batch_records(const std::vector<clinical::ClinicalRecord>& records,
                                                                 std::size_t batch_size = kMaxRecordsPerRequest);

// --- deterministic rendering ---------------------------------------------------

/// Two fractional digits, truncated toward zero, from the shortest decimal
/// representation of the value. Throws on non-finite input.
std::string round_for_report(double value);

/// "The Dry Eye (DE) condition for this subject is Yes, and The Meibomian Gland
/// Dysfunction (MGD) is No, and the Blepharitis is also Yes."
std::string diagnosis_statement(const DiseaseLabels& labels);

/// Throws "empty record" when nothing narratable is present.
QAPair render_report_deterministic(const clinical::ClinicalRecord& record);

// --- parsing -------------------------------------------------------------------

struct RejectedFragment {
    std::size_t index = 0;  // ordinal of the marker that opened the fragment
    std::string text;
    std::string reason;
};

struct SummaryParse {
    std::vector<QAPair> pairs;
    std::vector<RejectedFragment> rejected;
};

/// Splits on the Human/Assistant markers. Labels are extracted from each
/// answer and the subject id from each question when present. Throws
/// "no parsable pairs" when nothing survives.
SummaryParse parse_summary(std::string_view raw, QASource source = QASource::SummarizerLlm);

/// Subject id such as 42_2_R following "Subject " in a question.
std::optional<std::string> extract_subject_id(std::string_view question);

}  // namespace meibo::summarizer
