#include "meibo/evaluator.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "meibo/csv.hpp"
#include "meibo/error.hpp"

namespace meibo::eval {

using nlohmann::json;

namespace {

struct Token {
    std::string word;
    int sentence;
};

bool is_sentence_break(std::string_view text, std::size_t i) {
    const char c = text[i];
    if (c == '!' || c == '?' || c == ';' || c == '\n') return true;
    if (c != '.') return false;
    const bool digit_before = i > 0 && std::isdigit(static_cast<unsigned char>(text[i - 1]));
    const bool digit_after = i + 1 < text.size() && std::isdigit(static_cast<unsigned char>(text[i + 1]));
    return !(digit_before && digit_after);
}

std::vector<Token> tokenize(std::string_view text) {
    std::vector<Token> tokens;
    int sentence = 0;
    std::string word;
    auto flush = [&] {
        if (!word.empty()) tokens.push_back({std::move(word), sentence});
        word.clear();
    };
    for (std::size_t i = 0; i < text.size(); ++i) {
        const auto c = static_cast<unsigned char>(text[i]);
        if (std::isalnum(c)) {
            word += static_cast<char>(std::tolower(c));
        } else {
            flush();
            if (is_sentence_break(text, i)) ++sentence;
        }
    }
    flush();
    return tokens;
}

struct Event {
    std::size_t token;
    int sentence;
    bool is_mention;
    Disease disease;  // when is_mention
    TriState value;   // when !is_mention
};

std::vector<Event> scan(const std::vector<Token>& t) {
    auto word = [&](std::size_t i) -> std::string_view { return i < t.size() ? std::string_view(t[i].word) : ""; };
    std::vector<Event> events;
    for (std::size_t i = 0; i < t.size(); ++i) {
        const std::string_view w = word(i);
        const int s = t[i].sentence;
        if ((w == "dry" && (word(i + 1) == "eye" || word(i + 1) == "eyes")) || w == "de") {
            events.push_back({i, s, true, Disease::DryEye, TriState::Unknown});
        } else if ((w == "meibomian" && word(i + 1) == "gland" && word(i + 2) == "dysfunction") || w == "mgd") {
            events.push_back({i, s, true, Disease::Mgd, TriState::Unknown});
        } else if (w == "blepharitis") {
            events.push_back({i, s, true, Disease::Blepharitis, TriState::Unknown});
        } else if (w == "yes") {
            events.push_back({i, s, false, Disease::DryEye, TriState::Yes});
        } else if (w == "no") {
            events.push_back({i, s, false, Disease::DryEye, TriState::No});
        }
    }
    return events;
}

std::optional<double> ratio(long num, long den) {
    if (den == 0) return std::nullopt;
    return static_cast<double>(num) / static_cast<double>(den);
}

json optional_to_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

}  // namespace

Extraction extract_labels_with_notes(std::string_view raw_answer) {
    const auto events = scan(tokenize(raw_answer));
    std::map<Disease, std::set<TriState>> found;
    for (std::size_t i = 0; i < events.size(); ++i) {
        if (!events[i].is_mention) continue;
        const Disease d = events[i].disease;
        for (std::size_t j = i + 1; j < events.size() && events[j].sentence == events[i].sentence; ++j) {
            if (events[j].is_mention) {
                if (events[j].disease != d) break;
                continue;
            }
            found[d].insert(events[j].value);
            break;
        }
    }
    Extraction out;
    for (Disease d : kAllDiseases) {
        const auto& values = found[d];
        if (values.size() == 1) {
            out.labels[d] = *values.begin();
        } else if (values.size() > 1) {
            out.notes.push_back("conflicting yes/no statements for " + std::string(display_name(d)));
        }
    }
    return out;
}

DiseaseLabels extract_labels(std::string_view raw_answer) { return extract_labels_with_notes(raw_answer).labels; }

PredictionRecord make_prediction(std::string id, std::string raw_answer) {
    PredictionRecord p;
    p.id = std::move(id);
    p.raw_answer = std::move(raw_answer);
    auto ex = extract_labels_with_notes(p.raw_answer);
    p.extracted = ex.labels;
    p.extraction_notes = std::move(ex.notes);
    return p;
}

std::vector<PredictionRecord> read_predictions(const std::filesystem::path& jsonl) {
    std::ifstream in(jsonl);
    if (!in) throw Error("missing_file", "cannot open " + jsonl.string());
    std::vector<PredictionRecord> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            const json j = json::parse(line);
            out.push_back(make_prediction(j.at("id").get<std::string>(), j.at("raw_answer").get<std::string>()));
        } catch (const json::exception& e) {
            throw Error("malformed_predictions",
                        jsonl.string() + ":" + std::to_string(lineno) + ": malformed prediction line: " + e.what());
        }
    }
    return out;
}

std::string_view to_string(UnknownPolicy p) {
    return p == UnknownPolicy::CountAsWrong ? "count_as_wrong" : "exclude";
}

std::optional<UnknownPolicy> parse_policy(std::string_view s) {
    if (s == "count_as_wrong") return UnknownPolicy::CountAsWrong;
    if (s == "exclude") return UnknownPolicy::Exclude;
    return std::nullopt;
}

DiseaseMetrics compute_metrics(const ConfusionCounts& c, UnknownPolicy policy) {
    const bool penalize = policy == UnknownPolicy::CountAsWrong;
    const long missed_pos = c.fn + (penalize ? c.unknown_pos : 0);
    const long missed_neg = c.fp + (penalize ? c.unknown_neg : 0);
    const long total = c.tp + c.tn + c.fp + c.fn + (penalize ? c.unknown_pred() : 0);

    DiseaseMetrics m;
    m.counts = c;
    m.accuracy = ratio(c.tp + c.tn, total);
    m.sensitivity = ratio(c.tp, c.tp + missed_pos);
    m.specificity = ratio(c.tn, c.tn + missed_neg);
    // Harmonic mean of precision tp/(tp+fp) and sensitivity, in count form;
    // 0 when positives exist but none were recovered.
    m.f1 = ratio(2 * c.tp, 2 * c.tp + c.fp + missed_pos);
    return m;
}

EvalReport score(const std::vector<PredictionRecord>& preds, const std::vector<clinical::ClinicalRecord>& truth,
                 UnknownPolicy policy, const std::vector<Disease>& diseases) {
    std::map<std::string, const clinical::ClinicalRecord*> by_id;
    for (const auto& r : truth) by_id.emplace(r.subject_eye_id, &r);

    EvalReport report;
    report.policy = policy;
    std::map<Disease, ConfusionCounts> counts;
    for (Disease d : diseases) counts[d];

    std::set<std::string> seen;
    for (const auto& p : preds) {
        auto it = by_id.find(p.id);
        if (it == by_id.end()) throw Error("unknown_id", "prediction id '" + p.id + "' not found in truth");
        if (!seen.insert(p.id).second) throw Error("duplicate_id", "duplicate prediction id '" + p.id + "'");
        for (Disease d : diseases) {
            const TriState t = it->second->labels[d];
            if (t == TriState::Unknown)
                throw Error("unknown_truth",
                            "truth label " + std::string(to_string(d)) + " is Unknown for '" + p.id + "'");
            const TriState guess = p.extracted[d];
            auto& c = counts[d];
            if (guess == TriState::Unknown) (t == TriState::Yes ? c.unknown_pos : c.unknown_neg)++;
            else if (t == TriState::Yes) (guess == TriState::Yes ? c.tp : c.fn)++;
            else (guess == TriState::No ? c.tn : c.fp)++;
        }
    }
    for (auto& [d, c] : counts) report.diseases[d] = compute_metrics(c, policy);
    return report;
}

bool has_empty_disease(const EvalReport& report) {
    return std::ranges::any_of(report.diseases, [](const auto& kv) { return kv.second.counts.scored() == 0; });
}

json to_json(const EvalReport& report) {
    json diseases = json::object();
    for (const auto& [d, m] : report.diseases) {
        const auto& c = m.counts;
        diseases[std::string(to_string(d))] = {
            {"accuracy", optional_to_json(m.accuracy)},
            {"sensitivity", optional_to_json(m.sensitivity)},
            {"specificity", optional_to_json(m.specificity)},
            {"f1", optional_to_json(m.f1)},
            {"counts",
             {{"tp", c.tp}, {"fp", c.fp}, {"tn", c.tn}, {"fn", c.fn}, {"unknown_pred", c.unknown_pred()},
              {"unknown_pos", c.unknown_pos}, {"unknown_neg", c.unknown_neg}}}};
    }
    return json{{"model_name", report.model_name},
                {"policy", std::string(to_string(report.policy))},
                {"ablation", report.ablation ? *report.ablation : json(nullptr)},
                {"split_manifest_hash", report.split_manifest_hash},
                {"diseases", diseases}};
}

std::string format_percent(const std::optional<double>& v) {
    if (!v) return "-";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.1f", *v * 100.0);
    return buf;
}

RenderedTables render_tables(const std::vector<EvalReport>& reports, TableLayout layout) {
    if (reports.empty()) throw Error("empty_reports", "no reports to render");
    std::vector<Disease> diseases;
    for (const auto& [d, _] : reports.front().diseases) diseases.push_back(d);
    for (const auto& r : reports) {
        std::vector<Disease> mine;
        for (const auto& [d, _] : r.diseases) mine.push_back(d);
        if (mine != diseases) throw Error("heterogeneous_reports", "reports score different disease sets");
    }

    std::vector<std::vector<std::string>> grid;
    std::vector<std::string> header{"Model"};
    if (layout == TableLayout::Comparison) {
        for (Disease d : diseases)
            for (const char* m : {"Acc.", "SN", "SP", "F1"}) header.push_back(std::string(display_name(d)) + " " + m);
    } else {
        for (const char* f : {"Metadata", "Morphology", "MG-Express.", "Real Diag."}) header.emplace_back(f);
        for (Disease d : diseases) header.push_back(std::string(display_name(d)) + " Acc.");
    }
    grid.push_back(header);

    for (const auto& r : reports) {
        std::vector<std::string> row{r.model_name};
        if (layout == TableLayout::Comparison) {
            for (Disease d : diseases) {
                const auto& m = r.diseases.at(d);
                for (const auto& v : {m.accuracy, m.sensitivity, m.specificity, m.f1}) row.push_back(format_percent(v));
            }
        } else {
            for (const char* key : {"include_metadata", "include_morphology", "include_mg_expression",
                                    "include_real_diagnoses"}) {
                const bool on = r.ablation && r.ablation->value(key, false);
                row.emplace_back(on ? "Y" : "N");
            }
            for (Disease d : diseases) row.push_back(format_percent(r.diseases.at(d).accuracy));
        }
        grid.push_back(std::move(row));
    }

    std::vector<std::size_t> widths(header.size(), 0);
    for (const auto& row : grid)
        for (std::size_t c = 0; c < row.size(); ++c) widths[c] = std::max(widths[c], row[c].size());

    RenderedTables out;
    std::ostringstream text, csv_out;
    for (std::size_t i = 0; i < grid.size(); ++i) {
        std::string line;
        for (std::size_t c = 0; c < grid[i].size(); ++c) {
            if (c) line += "  ";
            line += grid[i][c] + std::string(widths[c] - grid[i][c].size(), ' ');
        }
        line.erase(line.find_last_not_of(' ') + 1);
        text << line << '\n';
        if (i == 0) {
            std::size_t total = 0;
            for (auto w : widths) total += w;
            text << std::string(total + 2 * (widths.size() - 1), '-') << '\n';
        }
        csv_out << csv::format_row(grid[i]) << '\n';
    }
    out.text = text.str();
    out.csv = csv_out.str();
    return out;
}

}  // namespace meibo::eval
