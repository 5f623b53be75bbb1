#include "meibo/summarizer.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <regex>

#include "meibo/error.hpp"
#include "meibo/evaluator.hpp"

namespace meibo::summarizer {

using nlohmann::json;
using nlohmann::ordered_json;
using clinical::ClinicalRecord;

namespace {

struct MetadataKey {
    const char* key;
    std::optional<double> ClinicalRecord::*member;
};

const std::vector<MetadataKey>& metadata_keys() {
    static const std::vector<MetadataKey> keys = {
        {"TMH", &ClinicalRecord::tmh_mm},
        {"NIKBUT", &ClinicalRecord::nikbut_s},
        {"FTBUT", &ClinicalRecord::ftbut_s},
        {"Schirmer", &ClinicalRecord::schirmer_mm},
        {"OSDI", &ClinicalRecord::osdi},
        {"Bulbar_Hyperemia", &ClinicalRecord::bulbar_hyperemia},
        {"MG_Expression_Quality", &ClinicalRecord::mg_expression_quality},
        {"MG_Expression_Quantity", &ClinicalRecord::mg_expression_quantity},
    };
    return keys;
}

struct MorphKey {
    const char* key;
    std::optional<double> morph::EyelidMorphology::*member;
};

const std::vector<MorphKey>& morph_keys() {
    static const std::vector<MorphKey> keys = {
        {"avg_length", &morph::EyelidMorphology::avg_length},
        {"avg_width", &morph::EyelidMorphology::avg_width},
        {"avg_contrast", &morph::EyelidMorphology::avg_contrast},
        {"avg_tortuosity", &morph::EyelidMorphology::avg_tortuosity},
        {"percent_atrophy", &morph::EyelidMorphology::percent_atrophy},
        {"gland_density", &morph::EyelidMorphology::gland_density},
    };
    return keys;
}

constexpr std::pair<Disease, const char*> kLabelKeys[] = {
    {Disease::DryEye, "Dry Eye"},
    {Disease::Mgd, "Meibomian Gland Dysfunction"},
    {Disease::Blepharitis, "Blepharitis"},
};

/// JSON text with ", " and ": " separators, matching the prompt examples.
void dump_spaced(const ordered_json& j, std::string& out) {
    if (j.is_object()) {
        out += '{';
        bool first = true;
        for (const auto& [k, v] : j.items()) {
            if (!first) out += ", ";
            first = false;
            out += json(k).dump();
            out += ": ";
            dump_spaced(v, out);
        }
        out += '}';
    } else if (j.is_array()) {
        out += '[';
        for (std::size_t i = 0; i < j.size(); ++i) {
            if (i) out += ", ";
            dump_spaced(j[i], out);
        }
        out += ']';
    } else {
        out += j.dump();
    }
}

std::string join_clauses(const std::vector<std::string>& parts) {
    if (parts.empty()) return {};
    if (parts.size() == 1) return parts[0];
    if (parts.size() == 2) return parts[0] + " and " + parts[1];
    std::string out;
    for (std::size_t i = 0; i < parts.size(); ++i) {
        if (i) out += ", ";
        if (i + 1 == parts.size()) out += "and ";
        out += parts[i];
    }
    return out;
}

std::string lower(std::string_view s) {
    std::string out(s);
    std::ranges::transform(out, out.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

std::string trim(std::string_view s) {
    auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) return {};
    auto e = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(b, e - b + 1));
}

}  // namespace

std::string_view to_string(QASource s) {
    switch (s) {
        case QASource::SummarizerLlm: return "summarizer_llm";
        case QASource::DeterministicTemplate: return "deterministic_template";
        case QASource::TrialKnowledge: return "trial_knowledge";
        case QASource::ClinicianCase: return "clinician_case";
    }
    return "";
}

std::optional<QASource> parse_source(std::string_view s) {
    for (auto v : {QASource::SummarizerLlm, QASource::DeterministicTemplate, QASource::TrialKnowledge,
                   QASource::ClinicianCase}) {
        if (to_string(v) == s) return v;
    }
    return std::nullopt;
}

std::string format_pair(const QAPair& pair) {
    std::string out(kHumanMarker);
    out += ' ' + pair.question + '\n';
    out += kAssistantMarker;
    if (!pair.answer.empty()) out += ' ' + pair.answer;
    return out;
}

std::string format_question_only(const QAPair& pair) {
    std::string out(kHumanMarker);
    out += ' ' + pair.question + '\n';
    out += kAssistantMarker;
    return out;
}

json to_json(const QAPair& pair) {
    return json{{"id", pair.id},
                {"question", pair.question},
                {"answer", pair.answer},
                {"source", std::string(to_string(pair.source))}};
}

// --- prompt -----------------------------------------------------------------

const std::string& task_description() {
    static const std::string text =
        "You are an intelligent medical summary generator. Your task is to generate a clinical report summary for "
        "the raw clinical metadata mentioned in the caption.\n"
        "I will provide you with medical data obtained from meibography images of patients and generate concise "
        "summaries. Please generate a human readable summary with Q&A format by setting subject's demography, and "
        "MG morphology as the Question while the ocular surface disease as the Answer.";
    return text;
}

const std::string& default_supporting_example() {
    static const std::string text =
        "Here's an example:\n"
        " {\"42_2_R\": {\"gender\": \"Male\", \"age\": 30, \"race\": \"Asian\", \"TMH\": 0.28, \"NIKBUT\": 12.33, "
        "\"MG_Morph\": {\"avg_length\": 4.878048, \"avg_width\": 0.463366, \"avg_contrast\": 13.573304, "
        "\"avg_tortuosity\": 0.277598}, \"Dry Eye\": \"Yes\", \"Meibomian Gland Dysfunction\": \"No\", "
        "\"Blepharitis\": \"Yes\"}}\n"
        "You should output something like: \n"
        "###Human: Subject 42_2_R and right eye. The person is a male with an age of 30, and the race is Asian. The "
        "Tear Meniscus Height (TMH) is 0.28mm, The Non-Invasive Keratograph Tear Breakup Time (NIKBUT) is 12.33 sec. "
        "The meibomian gland morphology has average length of 4.87mm, average width of 0.46mm, avg contrast is "
        "13.57, and average tortuosity is 0.28.\n"
        "###Assistant: The Dry Eye (DE) condition for this subject is Yes, and The Meibomian Gland Dysfunction (MGD) "
        "is No, and the Blepharitis is also Yes.\n\n"
        "This is the patient 42_2_R, 2 means OS2 category, 42 is patient ID, R is right eye. MG_Morph means "
        "meibomian gland morphology features. Please remove values after second decimal place. Please write in one "
        "paragraph as a clinical report summary. This summary could be an input data to fine tune large language "
        "model.";
    return text;
}

std::string PromptBundle::as_text() const {
    std::string out = "Task Description:\n" + task_description + "\n\nSupporting Examples:\n";
    for (std::size_t i = 0; i < supporting_examples.size(); ++i) {
        if (i) out += "\n\n";
        out += supporting_examples[i];
    }
    out += "\n\nPrompting the Clinical Metadata\n" + metadata_payload;
    return out;
}

std::vector<ChatMessage> PromptBundle::messages() const {
    std::string user = "Supporting Examples:\n";
    for (std::size_t i = 0; i < supporting_examples.size(); ++i) {
        if (i) user += "\n\n";
        user += supporting_examples[i];
    }
    user += "\n\nPrompting the Clinical Metadata\n" + metadata_payload;
    return {{"system", task_description}, {"user", user}};
}

ordered_json metadata_json(const std::vector<ClinicalRecord>& records) {
    ordered_json out = ordered_json::object();
    for (const auto& r : records) {
        ordered_json o = ordered_json::object();
        if (r.gender != clinical::Gender::OtherUnknown) o["gender"] = std::string(clinical::to_string(r.gender));
        if (r.age > 0) o["age"] = r.age;
        if (!r.race.empty()) o["race"] = r.race;
        for (const auto& k : metadata_keys()) {
            if (const auto& v = r.*(k.member)) o[k.key] = *v;
        }
        if (r.morphology) {
            ordered_json m = ordered_json::object();
            for (const auto& k : morph_keys()) {
                if (const auto& v = (*r.morphology).*(k.member)) m[k.key] = *v;
            }
            o["MG_Morph"] = m;
        }
        for (auto [d, key] : kLabelKeys) {
            if (r.labels[d] != TriState::Unknown) o[key] = std::string(meibo::to_string(r.labels[d]));
        }
        out[r.subject_eye_id] = o;
    }
    return out;
}

std::string serialize_metadata(const std::vector<ClinicalRecord>& records) {
    std::string out;
    dump_spaced(metadata_json(records), out);
    return out;
}

std::vector<ClinicalRecord> records_from_metadata(const ordered_json& payload) {
    if (!payload.is_object()) throw Error("malformed_metadata", "metadata payload must be an object keyed by id");
    std::vector<ClinicalRecord> out;
    for (const auto& [id, o] : payload.items()) {
        if (!o.is_object()) throw Error("malformed_metadata", "metadata for " + id + " is not an object");
        ClinicalRecord r;
        r.subject_eye_id = id;
        try {
            if (auto it = o.find("gender"); it != o.end()) {
                auto g = clinical::parse_gender(it->get<std::string>());
                if (!g) throw Error("malformed_metadata", "bad gender for " + id);
                r.gender = *g;
            }
            r.age = o.value("age", 0);
            r.race = o.value("race", "");
            for (const auto& k : metadata_keys()) {
                if (auto it = o.find(k.key); it != o.end() && !it->is_null()) r.*(k.member) = it->get<double>();
            }
            if (auto it = o.find("MG_Morph"); it != o.end() && it->is_object()) {
                morph::EyelidMorphology m;
                m.subject_eye_id = id;
                for (const auto& k : morph_keys()) {
                    if (auto jt = it->find(k.key); jt != it->end() && !jt->is_null()) m.*(k.member) = jt->get<double>();
                }
                r.morphology = m;
            }
            for (auto [d, key] : kLabelKeys) {
                if (auto it = o.find(key); it != o.end()) {
                    auto t = parse_tristate(it->get<std::string>());
                    if (!t) throw Error("malformed_metadata", std::string("bad label ") + key + " for " + id);
                    r.labels[d] = *t;
                }
            }
        } catch (const json::exception& e) {
            throw Error("malformed_metadata", "malformed metadata for " + id + ": " + e.what());
        }
        out.push_back(std::move(r));
    }
    return out;
}

PromptBundle build_prompt(const std::vector<ClinicalRecord>& records, std::optional<std::vector<std::string>> examples) {
    if (records.empty()) throw Error("empty_batch", "build_prompt requires at least one record");
    PromptBundle b;
    b.task_description = task_description();
    b.supporting_examples = examples ? std::move(*examples) : std::vector<std::string>{default_supporting_example()};
    b.metadata_payload = std::string(kMetadataRequest) + " " + serialize_metadata(records);
    for (const auto& r : records) b.subject_ids.push_back(r.subject_eye_id);
    return b;
}

std::vector<std::vector<ClinicalRecord>> batch_records(const std::vector<ClinicalRecord>& records,
                                                       std::size_t batch_size) {
    if (batch_size == 0) throw Error("invalid_batch", "batch size must be positive");
    std::vector<std::vector<ClinicalRecord>> out;
    for (std::size_t i = 0; i < records.size(); i += batch_size) {
        out.emplace_back(records.begin() + static_cast<std::ptrdiff_t>(i),
                         records.begin() + static_cast<std::ptrdiff_t>(std::min(records.size(), i + batch_size)));
    }
    return out;
}

// --- deterministic rendering ---------------------------------------------------

std::string round_for_report(double value) {
    if (!std::isfinite(value)) throw Error("non_finite", "cannot render non-finite value");
    char buf[512];
    auto res = std::to_chars(buf, buf + sizeof buf, value, std::chars_format::fixed);
    std::string s(buf, res.ptr);

    bool negative = false;
    if (!s.empty() && s[0] == '-') {
        negative = true;
        s.erase(0, 1);
    }
    std::string int_part = s, frac_part;
    if (auto dot = s.find('.'); dot != std::string::npos) {
        int_part = s.substr(0, dot);
        frac_part = s.substr(dot + 1);
    }
    frac_part = (frac_part + "00").substr(0, 2);
    const bool zero = int_part.find_first_not_of('0') == std::string::npos && frac_part == "00";
    return (negative && !zero ? "-" : "") + int_part + "." + frac_part;
}

std::string diagnosis_statement(const DiseaseLabels& labels) {
    return "The Dry Eye (DE) condition for this subject is " + std::string(meibo::to_string(labels.dry_eye)) +
           ", and The Meibomian Gland Dysfunction (MGD) is " + std::string(meibo::to_string(labels.mgd)) +
           ", and the Blepharitis is also " + std::string(meibo::to_string(labels.blepharitis)) + ".";
}

QAPair render_report_deterministic(const ClinicalRecord& r) {
    using clinical::Gender;
    std::vector<std::string> sentences;

    const auto eye = clinical::parse_subject_eye_id(r.subject_eye_id);
    std::string lead = "Subject " + r.subject_eye_id;
    if (eye) lead += eye->eye == clinical::Eye::Right ? " and right eye" : " and left eye";
    lead += ".";

    std::string demo;
    if (r.gender != Gender::OtherUnknown) demo = "The person is a " + lower(clinical::to_string(r.gender));
    if (r.age > 0) {
        demo += demo.empty() ? "The person has an age of " : " with an age of ";
        demo += std::to_string(r.age);
    }
    if (!r.race.empty()) demo += (demo.empty() ? "The race of the person is " : ", and the race is ") + r.race;
    if (!demo.empty()) sentences.push_back(demo + ".");

    std::vector<std::string> clinical_parts;
    auto add = [&](const std::optional<double>& v, const std::string& prefix, const std::string& unit) {
        if (v) clinical_parts.push_back(prefix + round_for_report(*v) + unit);
    };
    add(r.tmh_mm, "The Tear Meniscus Height (TMH) is ", "mm");
    add(r.nikbut_s, "The Non-Invasive Keratograph Tear Breakup Time (NIKBUT) is ", " sec");
    add(r.ftbut_s, "The Fluorescein Tear Breakup Time (FTBUT) is ", " sec");
    add(r.schirmer_mm, "The Schirmer's test is ", "mm");
    add(r.osdi, "The Ocular Surface Disease Index (OSDI) is ", "");
    add(r.bulbar_hyperemia, "The bulbar hyperemia grade is ", "");
    add(r.mg_expression_quality, "The meibomian gland expression quality score is ", "");
    add(r.mg_expression_quantity, "The meibomian gland expression quantity score is ", "");
    if (!clinical_parts.empty()) {
        std::string s;
        for (std::size_t i = 0; i < clinical_parts.size(); ++i) s += (i ? ", " : "") + clinical_parts[i];
        sentences.push_back(s + ".");
    }

    bool has_morph_narrative = false;
    if (r.morphology) {
        const auto& m = *r.morphology;
        std::vector<std::string> parts;
        if (m.avg_length) parts.push_back("average length of " + round_for_report(*m.avg_length) + "mm");
        if (m.avg_width) parts.push_back("average width of " + round_for_report(*m.avg_width) + "mm");
        if (m.avg_contrast) parts.push_back("avg contrast is " + round_for_report(*m.avg_contrast));
        if (m.avg_tortuosity) parts.push_back("average tortuosity is " + round_for_report(*m.avg_tortuosity));
        if (m.percent_atrophy) parts.push_back("percent atrophy is " + round_for_report(*m.percent_atrophy) + "%");
        if (m.gland_density) parts.push_back("gland density is " + round_for_report(*m.gland_density));
        if (!parts.empty()) {
            sentences.push_back("The meibomian gland morphology has " + join_clauses(parts) + ".");
            has_morph_narrative = true;
        }
    }

    if (sentences.empty()) throw Error("empty_record", "empty record");

    QAPair pair;
    pair.id = r.subject_eye_id;
    pair.source = QASource::DeterministicTemplate;
    pair.labels = r.labels;
    pair.has_morphology = has_morph_narrative;
    pair.question = lead;
    for (const auto& s : sentences) pair.question += " " + s;

    if (r.labels.all_unknown()) {
        pair.inference_only = true;
    } else {
        pair.answer = diagnosis_statement(r.labels);
    }
    return pair;
}

// --- parsing -------------------------------------------------------------------

std::optional<std::string> extract_subject_id(std::string_view question) {
    static const std::regex pattern(R"(Subject\s+([A-Za-z0-9-]+_[A-Za-z0-9-]+_[LRlr])\b)");
    std::match_results<std::string_view::const_iterator> m;
    if (std::regex_search(question.begin(), question.end(), m, pattern)) return m[1].str();
    return std::nullopt;
}

SummaryParse parse_summary(std::string_view raw, QASource source) {
    struct Marker {
        std::size_t pos;
        bool human;
    };
    std::vector<Marker> markers;
    for (auto [needle, human] : {std::pair{kHumanMarker, true}, std::pair{kAssistantMarker, false}}) {
        for (auto p = raw.find(needle); p != std::string_view::npos; p = raw.find(needle, p + needle.size()))
            markers.push_back({p, human});
    }
    std::ranges::sort(markers, {}, &Marker::pos);

    auto body = [&](std::size_t i) {
        const std::size_t start = markers[i].pos + (markers[i].human ? kHumanMarker.size() : kAssistantMarker.size());
        const std::size_t end = i + 1 < markers.size() ? markers[i + 1].pos : raw.size();
        return trim(raw.substr(start, end - start));
    };

    SummaryParse out;
    for (std::size_t i = 0; i < markers.size(); ++i) {
        if (!markers[i].human) {
            out.rejected.push_back({i, body(i), "assistant block without a preceding question"});
            continue;
        }
        const std::string question = body(i);
        if (i + 1 >= markers.size() || markers[i + 1].human) {
            out.rejected.push_back({i, question, "question without answer"});
            continue;
        }
        const std::string answer = body(i + 1);
        ++i;
        if (question.empty() || answer.empty()) {
            out.rejected.push_back({i - 1, question, question.empty() ? "empty question" : "empty answer"});
            continue;
        }
        QAPair pair;
        pair.question = question;
        pair.answer = answer;
        pair.source = source;
        pair.id = extract_subject_id(question).value_or("");
        pair.labels = eval::extract_labels(answer);
        pair.has_morphology = question.find("meibomian gland morphology") != std::string::npos;
        out.pairs.push_back(std::move(pair));
    }
    if (out.pairs.empty()) throw Error("no_parsable_pairs", "no parsable pairs");
    return out;
}

}  // namespace meibo::summarizer
