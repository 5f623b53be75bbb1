#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "meibo/labels.hpp"
#include "meibo/morphometry.hpp"

namespace meibo::clinical {

enum class Gender { Male, Female, OtherUnknown };

enum class Eye { Left, Right };

/// Parsed form of `<patientID>_<category>_<L|R>`, e.g. 42_2_R.
struct SubjectEyeId {
    std::string patient_id;
    std::string category;
    Eye eye = Eye::Right;
};

std::optional<SubjectEyeId> parse_subject_eye_id(const std::string& id);

/// Patient id for grouping; falls back to the whole id when it does not parse.
std::string patient_of(const std::string& subject_eye_id);

struct ClinicalRecord {
    std::string subject_eye_id;
    Gender gender = Gender::OtherUnknown;
    int age = 0;
    std::string race;
    std::optional<double> tmh_mm;
    std::optional<double> nikbut_s;
    std::optional<double> ftbut_s;
    std::optional<double> schirmer_mm;
    std::optional<double> osdi;
    std::optional<double> bulbar_hyperemia;
    std::optional<double> mg_expression_quality;
    std::optional<double> mg_expression_quantity;
    std::optional<morph::EyelidMorphology> morphology;
    DiseaseLabels labels;
};

/// Column / key names of the table contract, in canonical order.
const std::vector<std::string>& table_columns();

std::string_view to_string(Gender g);
std::optional<Gender> parse_gender(std::string_view text);

struct RowRejection {
    std::size_t row = 0;  // 1-based data row (header excluded)
    std::string subject_eye_id;
    std::string reason;
};

struct ParseResult {
    std::vector<ClinicalRecord> records;
    std::vector<RowRejection> rejected;
    std::vector<std::string> warnings;
};

/// Parses a CSV (header row, strict names, any order) or JSON array table.
/// Format is chosen by extension (.json, else CSV). Row-level problems are
/// collected; duplicate subject_eye_id values throw listing every duplicate.
ParseResult parse_clinical_table(const std::filesystem::path& path);
ParseResult parse_clinical_csv(std::istream& in);
ParseResult parse_clinical_json(const nlohmann::json& rows);

/// Validates and converts a single JSON object (keys per table_columns()).
/// An optional "morphology" object is accepted.
ClinicalRecord record_from_json(const nlohmann::json& row);
nlohmann::json to_json(const ClinicalRecord& r);

std::string to_csv(const std::vector<ClinicalRecord>& records);
nlohmann::json to_json(const std::vector<ClinicalRecord>& records);

struct JoinReport {
    std::vector<std::string> joined;
    std::vector<std::string> metadata_only;
    std::vector<std::string> orphan_morphologies;
};

struct JoinResult {
    std::vector<ClinicalRecord> records;
    JoinReport report;
};

/// Attaches morphology by subject_eye_id. Throws when morphology ids repeat.
JoinResult join_morphology(std::vector<ClinicalRecord> records, const std::vector<morph::EyelidMorphology>& morphologies);

nlohmann::json to_json(const JoinReport& report);

}  // namespace meibo::clinical
