#include "meibo/assembler.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>

#include "meibo/error.hpp"
#include "meibo/hashing.hpp"
#include "meibo/parallel.hpp"

namespace meibo::assembler {

using clinical::ClinicalRecord;
using nlohmann::json;
using summarizer::QASource;

void AblationConfig::validate() const {
    if (!include_metadata && (include_morphology || include_mg_expression || include_real_diagnoses))
        throw Error("invalid_ablation", "include_metadata must be true when any other ablation flag is set");
}

json to_json(const AblationConfig& cfg) {
    return json{{"include_metadata", cfg.include_metadata},
                {"include_morphology", cfg.include_morphology},
                {"include_mg_expression", cfg.include_mg_expression},
                {"include_real_diagnoses", cfg.include_real_diagnoses}};
}

AblationConfig ablation_from_json(const json& j) {
    if (!j.is_object()) throw Error("invalid_config", "ablation must be an object");
    AblationConfig cfg;
    try {
        cfg.include_metadata = j.value("include_metadata", cfg.include_metadata);
        cfg.include_morphology = j.value("include_morphology", cfg.include_morphology);
        cfg.include_mg_expression = j.value("include_mg_expression", cfg.include_mg_expression);
        cfg.include_real_diagnoses = j.value("include_real_diagnoses", cfg.include_real_diagnoses);
    } catch (const json::exception& e) {
        throw Error("invalid_config", std::string("ablation: ") + e.what());
    }
    cfg.validate();
    return cfg;
}

ClinicalRecord apply_ablation(const ClinicalRecord& record, const AblationConfig& cfg) {
    ClinicalRecord out = record;
    if (!cfg.include_morphology) out.morphology.reset();
    if (!cfg.include_mg_expression) {
        out.mg_expression_quality.reset();
        out.mg_expression_quantity.reset();
    }
    return out;
}

json to_json(const Rejection& r) { return json{{"id", r.id}, {"stage", r.stage}, {"reason", r.reason}}; }

std::vector<RenderResult> DeterministicRenderer::render(const std::vector<ClinicalRecord>& records) const {
    std::vector<RenderResult> out(records.size());
    parallel_for(records.size(), workers_ ? workers_ : default_workers(), [&](std::size_t i) {
        try {
            out[i].pair = summarizer::render_report_deterministic(records[i]);
        } catch (const Error& e) {
            out[i].error = e.what();
        }
    });
    return out;
}

std::vector<RenderResult> LlmRenderer::render(const std::vector<ClinicalRecord>& records) const {
    std::vector<RenderResult> out(records.size());
    const auto batches = summarizer::batch_records(records, batch_size_);
    std::vector<summarizer::PromptBundle> bundles;
    bundles.reserve(batches.size());
    for (const auto& b : batches) bundles.push_back(summarizer::build_prompt(b));
    const auto replies = llm::call_summarizer_batch(bundles, cfg_);

    std::size_t offset = 0;
    for (std::size_t b = 0; b < batches.size(); ++b) {
        const std::size_t n = batches[b].size();
        std::map<std::string, QAPair> by_id;
        std::string batch_error = replies[b].error;
        if (replies[b].text) {
            try {
                for (auto& p : summarizer::parse_summary(*replies[b].text).pairs)
                    if (!p.id.empty()) by_id.emplace(p.id, std::move(p));
            } catch (const Error& e) {
                batch_error = e.what();
            }
        }
        for (std::size_t k = 0; k < n; ++k) {
            const auto& rec = batches[b][k];
            auto& res = out[offset + k];
            auto it = by_id.find(rec.subject_eye_id);
            if (it == by_id.end()) {
                res.error = batch_error.empty() ? "no completion for record" : batch_error;
                continue;
            }
            if (it->second.labels != rec.labels) {
                res.error = "completion labels disagree with record";
                continue;
            }
            QAPair p = std::move(it->second);
            p.source = QASource::SummarizerLlm;
            res.pair = std::move(p);
        }
        offset += n;
    }
    return out;
}

Assembled assemble(const std::vector<ClinicalRecord>& records, const std::vector<QAPair>& knowledge,
                   const AblationConfig& cfg, const Renderer& renderer) {
    cfg.validate();
    Assembled out;
    std::set<std::string> ids;

    std::vector<ClinicalRecord> eligible;
    for (const auto& r : records) {
        if (!cfg.include_metadata) {
            out.rejected.push_back({r.subject_eye_id, "assemble", "metadata excluded by ablation"});
        } else if (!r.labels.all_definite()) {
            out.rejected.push_back({r.subject_eye_id, "assemble", "record has Unknown labels"});
        } else {
            eligible.push_back(apply_ablation(r, cfg));
        }
    }

    const auto rendered = renderer.render(eligible);
    for (std::size_t i = 0; i < eligible.size(); ++i) {
        const std::string& id = eligible[i].subject_eye_id;
        if (!rendered[i].pair) {
            out.rejected.push_back({id, "render", rendered[i].error});
        } else if (!ids.insert(id).second) {
            out.rejected.push_back({id, "assemble", "duplicate pair id"});
        } else {
            out.pairs.push_back(*rendered[i].pair);
        }
    }

    for (auto source : {QASource::TrialKnowledge, QASource::ClinicianCase}) {
        for (const auto& k : knowledge) {
            if (k.source != source) continue;
            if (source == QASource::ClinicianCase && !cfg.include_real_diagnoses) {
                out.rejected.push_back({k.id, "assemble", "clinician cases excluded by ablation"});
            } else if (!ids.insert(k.id).second) {
                out.rejected.push_back({k.id, "assemble", "duplicate pair id"});
            } else {
                out.pairs.push_back(k);
            }
        }
    }
    for (const auto& k : knowledge) {
        if (!k.is_knowledge()) out.rejected.push_back({k.id, "assemble", "not a knowledge pair"});
    }
    return out;
}

std::string_view to_string(Grouping g) { return g == Grouping::BySubject ? "by_subject" : "by_record"; }

std::optional<Grouping> parse_grouping(std::string_view s) {
    if (s == "by_subject") return Grouping::BySubject;
    if (s == "by_record") return Grouping::ByRecord;
    return std::nullopt;
}

DatasetSplit split(const std::vector<QAPair>& pairs, double ratio, std::uint64_t seed, Grouping grouping) {
    if (!(ratio > 0.0 && ratio < 1.0)) throw Error("invalid_ratio", "split ratio must lie in (0, 1)");

    const std::string salt = std::to_string(seed) + ":";
    auto order_key = [&](const std::string& key) { return std::pair{sha256_u64(salt + key), key}; };

    std::set<std::string> seen;
    std::vector<const QAPair*> knowledge;
    std::map<std::pair<std::uint64_t, std::string>, std::vector<const QAPair*>> groups;
    std::size_t n_records = 0;
    for (const auto& p : pairs) {
        if (!seen.insert(p.id).second) throw Error("duplicate_id", "duplicate pair id '" + p.id + "' in split input");
        if (p.is_knowledge()) {
            knowledge.push_back(&p);
            continue;
        }
        const std::string key = grouping == Grouping::BySubject ? clinical::patient_of(p.id) : p.id;
        groups[order_key(key)].push_back(&p);
        ++n_records;
    }
    if (groups.size() < 2)
        throw Error("too_few_groups", "split needs at least 2 groups, got " + std::to_string(groups.size()));

    DatasetSplit out;
    out.seed = seed;
    out.ratio = ratio;
    out.grouping = grouping;
    out.target_test = static_cast<std::size_t>(std::llround(static_cast<double>(n_records) * (1.0 - ratio)));

    auto by_id = [](const QAPair* a, const QAPair* b) { return a->id < b->id; };
    std::size_t groups_taken = 0;
    for (auto& [key, members] : groups) {
        std::ranges::sort(members, by_id);
        const bool room = groups_taken + 1 < groups.size();
        const bool want = out.test.size() < out.target_test || groups_taken == 0;
        auto& side = room && want ? out.test : out.train;
        if (&side == &out.test) ++groups_taken;
        for (const QAPair* p : members) side.push_back(*p);
    }

    std::ranges::sort(knowledge, [&](const QAPair* a, const QAPair* b) { return order_key(a->id) < order_key(b->id); });
    for (const QAPair* p : knowledge) out.train.push_back(*p);
    return out;
}

namespace {

json side_counts(const std::vector<QAPair>& side) {
    std::size_t metadata_only = 0, image_metadata = 0, knowledge = 0;
    for (const auto& p : side) {
        if (p.is_knowledge()) ++knowledge;
        else if (p.has_morphology) ++image_metadata;
        else ++metadata_only;
    }
    return json{{"total", side.size()},
                {"metadata_only", metadata_only},
                {"image_metadata", image_metadata},
                {"knowledge", knowledge}};
}

json ids_of(const std::vector<QAPair>& side) {
    json ids = json::array();
    for (const auto& p : side) ids.push_back(p.id);
    return ids;
}

void write_lines(const std::filesystem::path& path, const std::vector<QAPair>& pairs, bool question_only) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("io_error", "cannot write " + path.string());
    for (const auto& p : pairs) out << jsonl_line(p, question_only).dump() << '\n';
    if (!out) throw Error("io_error", "failed writing " + path.string());
}

}  // namespace

json manifest_json(const DatasetSplit& s) {
    return json{{"seed", s.seed},
                {"ratio", s.ratio},
                {"grouping", std::string(to_string(s.grouping))},
                {"target_test", s.target_test},
                {"counts", {{"train", side_counts(s.train)}, {"test", side_counts(s.test)}}},
                {"train_ids", ids_of(s.train)},
                {"test_ids", ids_of(s.test)}};
}

std::string manifest_hash(const DatasetSplit& s) { return sha256_hex(manifest_json(s).dump()); }

json jsonl_line(const QAPair& p, bool with_question_only) {
    json line{{"id", p.id},
              {"text", summarizer::format_pair(p)},
              {"labels", to_json(p.labels)},
              {"source", std::string(summarizer::to_string(p.source))}};
    if (with_question_only) line["question_only"] = summarizer::format_question_only(p);
    return line;
}

EmittedFiles emit_jsonl(const DatasetSplit& s, const std::filesystem::path& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw Error("io_error", "cannot create " + dir.string() + ": " + ec.message());
    EmittedFiles files{dir / "train.jsonl", dir / "test.jsonl", dir / "split_manifest.json"};
    write_lines(files.train, s.train, false);
    write_lines(files.test, s.test, true);
    std::ofstream m(files.manifest, std::ios::binary | std::ios::trunc);
    m << manifest_json(s).dump(2) << '\n';
    if (!m) throw Error("io_error", "failed writing " + files.manifest.string());
    return files;
}

std::vector<QAPair> read_jsonl(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("missing_file", "cannot open " + path.string());
    std::vector<QAPair> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        const std::string where = path.string() + ":" + std::to_string(lineno);
        try {
            const json j = json::parse(line);
            const auto source = summarizer::parse_source(j.at("source").get<std::string>());
            if (!source) throw Error("malformed_jsonl", where + ": unknown source");
            auto parsed = summarizer::parse_summary(j.at("text").get<std::string>(), *source);
            if (parsed.pairs.size() != 1 || !parsed.rejected.empty())
                throw Error("malformed_jsonl", where + ": text must hold exactly one pair");
            QAPair p = std::move(parsed.pairs.front());
            p.id = j.at("id").get<std::string>();
            p.labels = labels_from_json(j.at("labels"));
            out.push_back(std::move(p));
        } catch (const json::exception& e) {
            throw Error("malformed_jsonl", where + ": " + e.what());
        }
    }
    return out;
}

}  // namespace meibo::assembler
