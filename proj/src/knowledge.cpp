#include "meibo/knowledge.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <set>

#include "meibo/csv.hpp"
#include "meibo/error.hpp"

namespace meibo::knowledge {

using nlohmann::json;
using summarizer::QAPair;
using summarizer::QASource;

namespace {

struct VariableInfo {
    Variable v;
    const char* name;
    const char* display;
    const char* unit;
};

constexpr VariableInfo kVariables[] = {
    {Variable::Age, "age", "Age", "years"},
    {Variable::TmhMm, "tmh_mm", "TMH", "mm"},
    {Variable::NikbutS, "nikbut_s", "NIKBUT", "sec"},
    {Variable::FtbutS, "ftbut_s", "FTBUT", "sec"},
    {Variable::SchirmerMm, "schirmer_mm", "Schirmer's test", "mm"},
    {Variable::Osdi, "osdi", "OSDI", ""},
    {Variable::BulbarHyperemia, "bulbar_hyperemia", "bulbar hyperemia", ""},
    {Variable::MgExpressionQuality, "mg_expression_quality", "MG expression quality", ""},
    {Variable::MgExpressionQuantity, "mg_expression_quantity", "MG expression quantity", ""},
};

const VariableInfo& info(Variable v) {
    for (const auto& i : kVariables)
        if (i.v == v) return i;
    return kVariables[0];
}

std::string trim(std::string_view s) {
    auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) return {};
    auto e = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(b, e - b + 1));
}

std::optional<double> parse_number(const std::string& text) {
    const std::string s = trim(text);
    if (s.empty()) return std::nullopt;
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v))
        throw Error("invalid_row", "unparseable number '" + s + "'");
    return v;
}

std::string format_number(double v) {
    char buf[64];
    auto r = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, r.ptr);
}

std::string with_unit(double v, Variable var) {
    const std::string unit = info(var).unit;
    if (unit.empty()) return format_number(v);
    return format_number(v) + " " + unit;
}

}  // namespace

std::optional<Variable> parse_variable(std::string_view name) {
    for (const auto& i : kVariables)
        if (name == i.name) return i.v;
    return std::nullopt;
}

std::string_view to_string(Variable v) { return info(v).name; }
std::string_view display_name(Variable v) { return info(v).display; }
std::string_view unit_of(Variable v) { return info(v).unit; }

std::optional<Relation> parse_relation(std::string_view text) {
    const std::string s = trim(text);
    if (s == "<") return Relation::Less;
    if (s == "<=" || s == "≤") return Relation::LessEqual;
    if (s == ">") return Relation::Greater;
    if (s == ">=" || s == "≥") return Relation::GreaterEqual;
    if (s == "range") return Relation::Range;
    return std::nullopt;
}

std::string_view to_string(Relation r) {
    switch (r) {
        case Relation::Less: return "<";
        case Relation::LessEqual: return "<=";
        case Relation::Greater: return ">";
        case Relation::GreaterEqual: return ">=";
        case Relation::Range: return "range";
    }
    return "";
}

void validate(const TrialCriterion& c) {
    if (c.relation == Relation::Range && !(c.low < c.high))
        throw Error("inverted_range", "inverted range for " + std::string(to_string(c.variable)) + ": low " +
                                          format_number(c.low) + " >= high " + format_number(c.high));
    if (trim(c.meaning).empty()) throw Error("empty_meaning", "criterion meaning is empty");
}

CriteriaParse parse_trial_criteria(std::istream& in) {
    const auto rows = csv::read(in);
    if (rows.empty()) throw Error("malformed_table", "criteria CSV has no header row");
    std::map<std::string, std::size_t> col;
    for (std::size_t i = 0; i < rows[0].size(); ++i) col[trim(rows[0][i])] = i;
    for (const char* required : {"trial_id", "variable", "relation", "low", "high", "meaning"}) {
        if (!col.count(required)) throw Error("malformed_table", std::string("criteria CSV missing column ") + required);
    }
    const bool has_units = col.count("units") > 0;

    CriteriaParse out;
    for (std::size_t r = 1; r < rows.size(); ++r) {
        auto cell = [&](const char* name) {
            const std::size_t i = col.at(name);
            return i < rows[r].size() ? trim(rows[r][i]) : std::string();
        };
        try {
            TrialCriterion c;
            c.trial_id = cell("trial_id");
            if (c.trial_id.empty()) throw Error("invalid_row", "missing trial_id");
            auto var = parse_variable(cell("variable"));
            if (!var) throw Error("unknown_variable", "unknown variable '" + cell("variable") + "'");
            c.variable = *var;
            auto rel = parse_relation(cell("relation"));
            if (!rel) throw Error("invalid_row", "unknown relation '" + cell("relation") + "'");
            c.relation = *rel;
            const auto low = parse_number(cell("low"));
            const auto high = parse_number(cell("high"));
            if (c.relation == Relation::Range) {
                if (!low || !high) throw Error("invalid_row", "range needs both low and high");
                c.low = *low;
                c.high = *high;
            } else {
                if (low.has_value() == high.has_value())
                    throw Error("invalid_row", "unary relation needs exactly one of low/high");
                c.threshold = low ? *low : *high;
            }
            c.meaning = cell("meaning");
            if (has_units) {
                const std::string units = cell("units");
                if (!units.empty() && units != unit_of(c.variable))
                    throw Error("unit_mismatch", "unit '" + units + "' does not match " +
                                                     std::string(to_string(c.variable)) + " (" +
                                                     std::string(unit_of(c.variable)) + ")");
            }
            validate(c);
            out.criteria.push_back(std::move(c));
        } catch (const Error& e) {
            out.rejected.push_back({r, e.what()});
        }
    }
    return out;
}

CriteriaParse ingest_trial_criteria(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("missing_file", "cannot open " + path.string());
    return parse_trial_criteria(in);
}

std::string describe(const TrialCriterion& c) {
    const std::string name(display_name(c.variable));
    if (c.relation == Relation::Range)
        return name + " between " + format_number(c.low) + " and " + with_unit(c.high, c.variable);
    return name + " " + std::string(to_string(c.relation)) + " " + with_unit(c.threshold, c.variable);
}

CriteriaPairs criteria_to_qa(const std::vector<TrialCriterion>& criteria) {
    if (criteria.empty()) throw Error("empty_input", "no criteria to convert");
    CriteriaPairs out;
    std::map<std::string, int> per_trial;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        const auto& c = criteria[i];
        if (trim(c.meaning).empty()) {
            out.rejected.push_back({i + 1, "criterion meaning is empty"});
            continue;
        }
        QAPair p;
        p.id = c.trial_id + "-c" + std::to_string(++per_trial[c.trial_id]);
        p.question = "What does " + describe(c) + " indicate?";
        p.answer = trim(c.meaning);
        p.source = QASource::TrialKnowledge;
        out.pairs.push_back(std::move(p));
    }
    return out;
}

std::vector<ClinicianCase> parse_clinician_cases(const json& j) {
    if (!j.is_array()) throw Error("malformed_cases", "clinician cases must be a JSON array");
    std::vector<ClinicianCase> out;
    std::set<std::string> ids;
    for (const auto& item : j) {
        try {
            ClinicianCase c;
            c.case_id = item.at("case_id").get<std::string>();
            c.presentation = item.at("presentation").get<std::string>();
            c.rationale = item.value("rationale", "");
            const json& dx = item.at("diagnosis");
            c.diagnosis = labels_from_json(dx);
            c.diagnosis_names = dx.value("names", std::vector<std::string>{});
            if (!ids.insert(c.case_id).second) throw Error("duplicate_id", "duplicate case_id " + c.case_id);
            out.push_back(std::move(c));
        } catch (const json::exception& e) {
            throw Error("malformed_cases", std::string("malformed clinician case: ") + e.what());
        }
    }
    return out;
}

std::vector<ClinicianCase> load_clinician_cases(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("missing_file", "cannot open " + path.string());
    try {
        return parse_clinician_cases(json::parse(in));
    } catch (const json::exception& e) {
        throw Error("malformed_cases", "malformed JSON " + path.string() + ": " + e.what());
    }
}

std::vector<QAPair> cases_to_qa(const std::vector<ClinicianCase>& cases) {
    if (cases.empty()) throw Error("empty_input", "no clinician cases to convert");
    std::vector<QAPair> out;
    for (const auto& c : cases) {
        if (trim(c.rationale).empty()) throw Error("missing_rationale", "case " + c.case_id + " has no rationale");
        if (trim(c.presentation).empty()) throw Error("invalid_case", "case " + c.case_id + " has no presentation");
        QAPair p;
        p.id = c.case_id;
        p.question = trim(c.presentation);
        p.answer = summarizer::diagnosis_statement(c.diagnosis);
        if (!c.diagnosis_names.empty()) {
            p.answer += " Diagnosis:";
            for (std::size_t i = 0; i < c.diagnosis_names.size(); ++i)
                p.answer += (i ? ", " : " ") + c.diagnosis_names[i];
            p.answer += ".";
        }
        p.answer += " Rationale: " + trim(c.rationale);
        p.source = QASource::ClinicianCase;
        p.labels = c.diagnosis;
        out.push_back(std::move(p));
    }
    return out;
}

}  // namespace meibo::knowledge
