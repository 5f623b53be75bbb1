#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "meibo/labels.hpp"
#include "meibo/summarizer.hpp"

namespace meibo::knowledge {

/// Clinical fields a trial criterion may constrain.
enum class Variable {
    Age,
    TmhMm,
    NikbutS,
    FtbutS,
    SchirmerMm,
    Osdi,
    BulbarHyperemia,
    MgExpressionQuality,
    MgExpressionQuantity,
};

enum class Relation { Less, LessEqual, Greater, GreaterEqual, Range };

std::optional<Variable> parse_variable(std::string_view name);
std::string_view to_string(Variable v);     // ClinicalRecord field name
std::string_view display_name(Variable v);  // "FTBUT", "OSDI", ...
std::string_view unit_of(Variable v);       // "sec", "mm", "" ...

std::optional<Relation> parse_relation(std::string_view text);
std::string_view to_string(Relation r);  // "<", "<=", ">", ">=", "range"

struct TrialCriterion {
    std::string trial_id;
    Variable variable = Variable::FtbutS;
    Relation relation = Relation::Less;
    /// Unary relations use `threshold`; Range uses [low, high] with low < high.
    double threshold = 0.0;
    double low = 0.0;
    double high = 0.0;
    std::string meaning;
};

struct RowRejection {
    std::size_t row = 0;
    std::string reason;
};

struct CriteriaParse {
    std::vector<TrialCriterion> criteria;
    std::vector<RowRejection> rejected;
};

/// CSV columns trial_id,variable,relation,low,high,meaning plus an optional
/// units column checked against the variable's unit. Unary relations take the
/// single non-empty bound.
CriteriaParse ingest_trial_criteria(const std::filesystem::path& path);
CriteriaParse parse_trial_criteria(std::istream& in);

/// Validates one criterion; throws on inverted range or empty meaning.
void validate(const TrialCriterion& c);

/// "FTBUT < 10 sec"
std::string describe(const TrialCriterion& c);

struct CriteriaPairs {
    std::vector<summarizer::QAPair> pairs;
    std::vector<RowRejection> rejected;
};

/// One pair per valid criterion, order preserved; criteria with an empty
/// meaning are rejected. Throws on an empty input list.
CriteriaPairs criteria_to_qa(const std::vector<TrialCriterion>& criteria);

struct ClinicianCase {
    std::string case_id;
    std::string presentation;
    DiseaseLabels diagnosis;
    std::vector<std::string> diagnosis_names;
    std::string rationale;
};

/// JSON array of {case_id, presentation, diagnosis:{dry_eye,mgd,blepharitis,names[]}, rationale}.
std::vector<ClinicianCase> load_clinician_cases(const std::filesystem::path& path);
std::vector<ClinicianCase> parse_clinician_cases(const nlohmann::json& j);

/// Throws on an empty list or a case with an empty rationale.
std::vector<summarizer::QAPair> cases_to_qa(const std::vector<ClinicianCase>& cases);

}  // namespace meibo::knowledge
