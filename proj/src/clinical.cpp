#include "meibo/clinical.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "meibo/csv.hpp"
#include "meibo/error.hpp"

namespace meibo::clinical {

using nlohmann::json;

namespace {

struct NumericField {
    const char* name;
    std::optional<double> ClinicalRecord::*member;
    double min;
    double max;
};

const std::vector<NumericField>& numeric_fields() {
    static const std::vector<NumericField> fields = {
        {"tmh_mm", &ClinicalRecord::tmh_mm, 0.0, HUGE_VAL},
        {"nikbut_s", &ClinicalRecord::nikbut_s, 0.0, HUGE_VAL},
        {"ftbut_s", &ClinicalRecord::ftbut_s, 0.0, HUGE_VAL},
        {"schirmer_mm", &ClinicalRecord::schirmer_mm, 0.0, HUGE_VAL},
        {"osdi", &ClinicalRecord::osdi, 0.0, 100.0},
        {"bulbar_hyperemia", &ClinicalRecord::bulbar_hyperemia, 0.0, HUGE_VAL},
        {"mg_expression_quality", &ClinicalRecord::mg_expression_quality, 0.0, HUGE_VAL},
        {"mg_expression_quantity", &ClinicalRecord::mg_expression_quantity, 0.0, HUGE_VAL},
    };
    return fields;
}

std::string trim(std::string_view s) {
    auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) return {};
    auto e = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(b, e - b + 1));
}

std::string format_number(double v) {
    char buf[64];
    auto r = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, r.ptr);
}

[[noreturn]] void reject(const std::string& reason) { throw Error("invalid_row", reason); }

/// Absent for null/empty; throws on anything that is not a finite number.
std::optional<double> number_field(const json& row, const char* key) {
    auto it = row.find(key);
    if (it == row.end() || it->is_null()) return std::nullopt;
    if (it->is_number()) {
        const double v = it->get<double>();
        if (!std::isfinite(v)) reject(std::string("non-finite ") + key);
        return v;
    }
    if (!it->is_string()) reject(std::string("non-numeric ") + key);
    const std::string s = trim(it->get<std::string>());
    if (s.empty()) return std::nullopt;
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v))
        reject(std::string("unparseable ") + key + ": '" + s + "'");
    return v;
}

std::string string_field(const json& row, const char* key) {
    auto it = row.find(key);
    if (it == row.end() || it->is_null()) return {};
    if (it->is_string()) return trim(it->get<std::string>());
    if (it->is_number_integer()) return std::to_string(it->get<long long>());
    reject(std::string("non-text ") + key);
}

void check_unique(const std::vector<ClinicalRecord>& records) {
    std::map<std::string, int> counts;
    for (const auto& r : records) ++counts[r.subject_eye_id];
    std::string dups;
    for (const auto& [id, n] : counts) {
        if (n > 1) dups += (dups.empty() ? "" : ", ") + id;
    }
    if (!dups.empty()) throw Error("duplicate_id", "duplicate subject_eye_id: " + dups);
}

}  // namespace

std::optional<SubjectEyeId> parse_subject_eye_id(const std::string& id) {
    const auto last = id.rfind('_');
    if (last == std::string::npos || last == 0) return std::nullopt;
    const auto mid = id.rfind('_', last - 1);
    if (mid == std::string::npos || mid == 0 || mid + 1 == last) return std::nullopt;
    const std::string eye = id.substr(last + 1);
    SubjectEyeId out{id.substr(0, mid), id.substr(mid + 1, last - mid - 1), Eye::Right};
    if (eye == "R" || eye == "r") out.eye = Eye::Right;
    else if (eye == "L" || eye == "l") out.eye = Eye::Left;
    else return std::nullopt;
    return out;
}

std::string patient_of(const std::string& subject_eye_id) {
    auto parsed = parse_subject_eye_id(subject_eye_id);
    return parsed ? parsed->patient_id : subject_eye_id;
}

const std::vector<std::string>& table_columns() {
    static const std::vector<std::string> columns = {
        "subject_eye_id", "gender", "age", "race", "tmh_mm", "nikbut_s", "ftbut_s", "schirmer_mm", "osdi",
        "bulbar_hyperemia", "mg_expression_quality", "mg_expression_quantity", "dry_eye", "mgd", "blepharitis"};
    return columns;
}

std::string_view to_string(Gender g) {
    switch (g) {
        case Gender::Male: return "Male";
        case Gender::Female: return "Female";
        case Gender::OtherUnknown: break;
    }
    return "Other/Unknown";
}

std::optional<Gender> parse_gender(std::string_view text) {
    std::string s;
    for (char c : trim(text)) s += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    if (s == "male" || s == "m") return Gender::Male;
    if (s == "female" || s == "f") return Gender::Female;
    if (s.empty() || s == "other" || s == "unknown" || s == "other/unknown" || s == "o" || s == "u")
        return Gender::OtherUnknown;
    return std::nullopt;
}

ClinicalRecord record_from_json(const json& row) {
    if (!row.is_object()) reject("row is not an object");
    ClinicalRecord r;

    r.subject_eye_id = string_field(row, "subject_eye_id");
    if (r.subject_eye_id.empty()) reject("missing subject_eye_id");
    if (!parse_subject_eye_id(r.subject_eye_id))
        reject("subject_eye_id '" + r.subject_eye_id + "' is not <patient>_<category>_<L|R>");

    const auto age = number_field(row, "age");
    if (!age) reject("missing age");
    if (*age <= 0 || *age != std::floor(*age) || *age > 200) reject("age must be a positive integer");
    r.age = static_cast<int>(*age);

    auto gender = parse_gender(string_field(row, "gender"));
    if (!gender) reject("unparseable gender '" + string_field(row, "gender") + "'");
    r.gender = *gender;
    r.race = string_field(row, "race");

    for (const auto& f : numeric_fields()) {
        auto v = number_field(row, f.name);
        if (v && (*v < f.min || *v > f.max)) reject(std::string(f.name) + " out of range");
        r.*(f.member) = v;
    }

    for (Disease d : kAllDiseases) {
        const std::string key(to_string(d));
        auto it = row.find(key);
        std::string text;
        if (it != row.end() && !it->is_null()) {
            if (it->is_boolean()) text = it->get<bool>() ? "yes" : "no";
            else text = string_field(row, key.c_str());
        }
        auto parsed = parse_tristate(text);
        if (!parsed) reject("unparseable label " + key + " '" + text + "'");
        r.labels[d] = *parsed;
    }

    if (auto it = row.find("morphology"); it != row.end() && !it->is_null()) {
        try {
            r.morphology = morph::morphology_from_json(*it);
        } catch (const Error& e) {
            reject(e.what());
        }
    }
    return r;
}

ParseResult parse_clinical_json(const json& rows) {
    if (!rows.is_array()) throw Error("malformed_table", "clinical JSON must be an array of objects");
    ParseResult out;
    std::set<std::string> known(table_columns().begin(), table_columns().end());
    known.insert("morphology");
    std::set<std::string> warned;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const json& row = rows[i];
        if (row.is_object()) {
            for (const auto& [key, _] : row.items()) {
                if (!known.count(key) && warned.insert(key).second) out.warnings.push_back("unknown column '" + key + "'");
            }
        }
        try {
            out.records.push_back(record_from_json(row));
        } catch (const Error& e) {
            std::string id = row.is_object() && row.contains("subject_eye_id") && row["subject_eye_id"].is_string()
                                 ? row["subject_eye_id"].get<std::string>()
                                 : "";
            out.rejected.push_back({i + 1, id, e.what()});
        }
    }
    check_unique(out.records);
    return out;
}

ParseResult parse_clinical_csv(std::istream& in) {
    const auto rows = csv::read(in);
    if (rows.empty()) throw Error("malformed_table", "CSV has no header row");
    const csv::Row& header = rows.front();
    std::set<std::string> seen;
    for (const auto& col : header) {
        if (!seen.insert(trim(col)).second) throw Error("malformed_table", "duplicate column '" + col + "'");
    }
    json array = json::array();
    for (std::size_t i = 1; i < rows.size(); ++i) {
        json obj = json::object();
        for (std::size_t c = 0; c < header.size(); ++c) {
            const std::string cell = c < rows[i].size() ? rows[i][c] : std::string();
            obj[trim(header[c])] = cell.empty() ? json(nullptr) : json(cell);
        }
        array.push_back(std::move(obj));
    }
    ParseResult out = parse_clinical_json(array);
    if (array.empty()) {
        std::set<std::string> known(table_columns().begin(), table_columns().end());
        for (const auto& col : header)
            if (!known.count(trim(col))) out.warnings.push_back("unknown column '" + trim(col) + "'");
    }
    return out;
}

ParseResult parse_clinical_table(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("missing_file", "cannot open " + path.string());
    if (path.extension() == ".json") {
        json j;
        try {
            j = json::parse(in);
        } catch (const json::exception& e) {
            throw Error("malformed_table", "malformed JSON table " + path.string() + ": " + e.what());
        }
        return parse_clinical_json(j);
    }
    return parse_clinical_csv(in);
}

json to_json(const ClinicalRecord& r) {
    json j = json::object();
    j["subject_eye_id"] = r.subject_eye_id;
    j["gender"] = std::string(to_string(r.gender));
    j["age"] = r.age;
    j["race"] = r.race;
    for (const auto& f : numeric_fields()) {
        const auto& v = r.*(f.member);
        j[f.name] = v ? json(*v) : json(nullptr);
    }
    for (Disease d : kAllDiseases) j[std::string(to_string(d))] = std::string(to_string(r.labels[d]));
    if (r.morphology) j["morphology"] = morph::to_json(*r.morphology);
    return j;
}

json to_json(const std::vector<ClinicalRecord>& records) {
    json out = json::array();
    for (const auto& r : records) out.push_back(to_json(r));
    return out;
}

std::string to_csv(const std::vector<ClinicalRecord>& records) {
    std::ostringstream out;
    out << csv::format_row(table_columns()) << '\n';
    for (const auto& r : records) {
        csv::Row row{r.subject_eye_id, std::string(to_string(r.gender)), std::to_string(r.age), r.race};
        for (const auto& f : numeric_fields()) {
            const auto& v = r.*(f.member);
            row.push_back(v ? format_number(*v) : "");
        }
        for (Disease d : kAllDiseases) {
            row.push_back(r.labels[d] == TriState::Unknown ? "" : std::string(to_string(r.labels[d])));
        }
        out << csv::format_row(row) << '\n';
    }
    return out.str();
}

JoinResult join_morphology(std::vector<ClinicalRecord> records, const std::vector<morph::EyelidMorphology>& morphologies) {
    std::map<std::string, const morph::EyelidMorphology*> by_id;
    for (const auto& m : morphologies) {
        if (!by_id.emplace(m.subject_eye_id, &m).second)
            throw Error("duplicate_id", "duplicate morphology id: " + m.subject_eye_id);
    }
    JoinResult out;
    std::set<std::string> matched;
    for (auto& r : records) {
        auto it = by_id.find(r.subject_eye_id);
        if (it != by_id.end()) {
            r.morphology = *it->second;
            matched.insert(r.subject_eye_id);
            out.report.joined.push_back(r.subject_eye_id);
        } else {
            out.report.metadata_only.push_back(r.subject_eye_id);
        }
    }
    for (const auto& m : morphologies) {
        if (!matched.count(m.subject_eye_id)) out.report.orphan_morphologies.push_back(m.subject_eye_id);
    }
    out.records = std::move(records);
    return out;
}

json to_json(const JoinReport& report) {
    return json{{"joined", report.joined},
                {"metadata_only", report.metadata_only},
                {"orphan_morphologies", report.orphan_morphologies}};
}

}  // namespace meibo::clinical
