#include "meibo/commands.hpp"

#include <algorithm>
#include <fstream>
#include <iostream>
#include <mutex>
#include <set>
#include <sstream>

#include <CLI11.hpp>

#include "meibo/evaluator.hpp"
#include "meibo/hashing.hpp"
#include "meibo/knowledge.hpp"
#include "meibo/mock_llm.hpp"
#include "meibo/parallel.hpp"
#include "meibo/png_io.hpp"

namespace meibo::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("io_error", "cannot write " + path.string());
    out << text;
    if (!out) throw Error("io_error", "failed writing " + path.string());
}

void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

std::vector<fs::path> files_with_extension(const fs::path& dir, const std::string& ext) {
    std::vector<fs::path> out;
    for (const auto& entry : fs::directory_iterator(dir))
        if (entry.is_regular_file() && entry.path().extension() == ext) out.push_back(entry.path());
    std::ranges::sort(out);
    return out;
}

json rejections_json(const std::vector<assembler::Rejection>& rejected) {
    json arr = json::array();
    for (const auto& r : rejected) arr.push_back(assembler::to_json(r));
    return arr;
}

std::unique_ptr<assembler::Renderer> make_renderer(RendererKind kind, bool offline, const llm::EndpointConfig& endpoint) {
    if (offline || kind == RendererKind::Deterministic) return std::make_unique<assembler::DeterministicRenderer>();
    return std::make_unique<assembler::LlmRenderer>(endpoint);
}

template <typename Fn>
auto stage(const std::string& name, Fn&& fn) {
    try {
        return fn();
    } catch (const StageError&) {
        throw;
    } catch (const Error& e) {
        throw StageError(name, e);
    }
}

}  // namespace

QuantifyReport quantify_dir(const fs::path& masks_dir, const std::optional<fs::path>& images_dir, const fs::path& out_dir,
                            std::size_t workers) {
    if (!fs::is_directory(masks_dir)) throw Error("missing_file", "masks directory not found: " + masks_dir.string());
    const auto masks = files_with_extension(masks_dir, ".png");
    if (masks.empty()) throw Error("no_inputs", "no inputs in " + masks_dir.string());
    fs::create_directories(out_dir);

    struct Slot {
        std::optional<morph::EyelidMorphology> result;
        std::string code, message;
    };
    std::vector<Slot> slots(masks.size());
    parallel_for(masks.size(), workers ? workers : default_workers(), [&](std::size_t i) {
        const fs::path& mask_path = masks[i];
        try {
            fs::path sidecar = mask_path;
            sidecar.replace_extension(".json");
            const auto mask = morph::load_labeled_mask(mask_path, sidecar);
            std::optional<IntensityImage> image;
            if (images_dir) {
                const fs::path img = *images_dir / mask_path.filename();
                if (fs::exists(img)) {
                    image = png::read_gray8(img);
                    if (image->rows() != mask.labels.rows() || image->cols() != mask.labels.cols())
                        throw Error("dimension_mismatch", "image size does not match mask");
                }
            }
            slots[i].result = morph::quantify(mask, image ? &*image : nullptr);
        } catch (const Error& e) {
            slots[i].code = e.code();
            slots[i].message = e.what();
        }
    });

    QuantifyReport report;
    std::set<std::string> ids;
    for (std::size_t i = 0; i < masks.size(); ++i) {
        const std::string file = masks[i].filename().string();
        auto& s = slots[i];
        if (s.result && !ids.insert(s.result->subject_eye_id).second) {
            s.code = "duplicate_id";
            s.message = "subject_eye_id " + s.result->subject_eye_id + " already quantified";
            s.result.reset();
        }
        if (!s.result) {
            report.failures.push_back({{"file", file}, {"error", s.code}, {"message", s.message}});
            continue;
        }
        const fs::path out = out_dir / (s.result->subject_eye_id + ".json");
        write_json(out, morph::to_json(*s.result));
        report.outputs.push_back(out);
    }
    write_json(out_dir / "failures.json", report.failures);
    return report;
}

std::vector<morph::EyelidMorphology> load_morphology_dir(const fs::path& dir) {
    std::vector<morph::EyelidMorphology> out;
    for (const auto& path : files_with_extension(dir, ".json")) {
        if (path.filename() == "failures.json") continue;
        std::ifstream in(path);
        try {
            out.push_back(morph::morphology_from_json(json::parse(in)));
        } catch (const json::exception& e) {
            throw Error("malformed_morphology", "malformed morphology " + path.string() + ": " + e.what());
        }
    }
    return out;
}

KnowledgeLoad load_knowledge(const std::optional<fs::path>& criteria, const std::optional<fs::path>& cases) {
    KnowledgeLoad out;
    if (criteria) {
        const auto parsed = knowledge::ingest_trial_criteria(*criteria);
        for (const auto& r : parsed.rejected)
            out.rejected.push_back({criteria->filename().string() + ":" + std::to_string(r.row), "knowledge", r.reason});
        if (!parsed.criteria.empty()) {
            auto qa = knowledge::criteria_to_qa(parsed.criteria);
            for (auto& p : qa.pairs) out.pairs.push_back(std::move(p));
            for (const auto& r : qa.rejected)
                out.rejected.push_back({"criterion " + std::to_string(r.row), "knowledge", r.reason});
        }
    }
    if (cases) {
        const auto loaded = knowledge::load_clinician_cases(*cases);
        if (!loaded.empty())
            for (auto& p : knowledge::cases_to_qa(loaded)) out.pairs.push_back(std::move(p));
    }
    return out;
}

std::vector<clinical::ClinicalRecord> load_records(const fs::path& path) {
    auto parsed = clinical::parse_clinical_table(path);
    if (!parsed.rejected.empty()) {
        const auto& r = parsed.rejected.front();
        throw Error("invalid_row", path.string() + ": row " + std::to_string(r.row) + " (" + r.subject_eye_id +
                                       "): " + r.reason);
    }
    return std::move(parsed.records);
}

PipelineResult run_pipeline(const PipelineConfig& cfg, bool offline, std::ostream* progress) {
    stage("validate", [&] {
        cfg.ablation.validate();
        validate_paths(cfg);
        return 0;
    });

    const fs::path out_dir = fs::absolute(cfg.resolve(cfg.paths.output_dir)).lexically_normal();
    const fs::path parent = out_dir.parent_path();
    const fs::path staging = parent / ("." + out_dir.filename().string() + ".staging");
    fs::create_directories(parent);
    fs::remove_all(staging);
    fs::create_directories(staging);

    std::vector<std::string> log;
    auto note = [&](const std::string& line) {
        log.push_back(line);
        if (progress) *progress << line << '\n';
    };

    try {
        std::vector<morph::EyelidMorphology> morphologies;
        if (cfg.paths.masks_dir) {
            stage("quantify", [&] {
                std::optional<fs::path> images;
                if (cfg.paths.images_dir) images = cfg.resolve(*cfg.paths.images_dir);
                const auto rep = quantify_dir(cfg.resolve(*cfg.paths.masks_dir), images, staging / "morphology");
                morphologies = load_morphology_dir(staging / "morphology");
                note("quantify: " + std::to_string(rep.outputs.size()) + " masks quantified, " +
                     std::to_string(rep.failures.size()) + " failed");
                return 0;
            });
        } else {
            note("quantify: skipped (no masks_dir)");
        }

        std::vector<assembler::Rejection> rejected;
        auto records = stage("ingest", [&] {
            auto parsed = clinical::parse_clinical_table(cfg.resolve(cfg.paths.clinical_table));
            for (const auto& r : parsed.rejected)
                rejected.push_back({r.subject_eye_id.empty() ? "row " + std::to_string(r.row) : r.subject_eye_id,
                                    "ingest", r.reason});
            auto joined = clinical::join_morphology(std::move(parsed.records), morphologies);
            write_json(staging / "records.json", clinical::to_json(joined.records));
            json warnings = parsed.warnings;
            write_json(staging / "ingest_report.json",
                       json{{"records", joined.records.size()},
                            {"rows_rejected", parsed.rejected.size()},
                            {"warnings", warnings},
                            {"join", clinical::to_json(joined.report)}});
            note("ingest: " + std::to_string(joined.records.size()) + " records, " +
                 std::to_string(parsed.rejected.size()) + " rows rejected, " +
                 std::to_string(joined.report.joined.size()) + " with morphology");
            return std::move(joined.records);
        });

        auto knowledge_pairs = stage("knowledge", [&] {
            std::optional<fs::path> criteria, cases;
            if (cfg.paths.trial_criteria) criteria = cfg.resolve(*cfg.paths.trial_criteria);
            if (cfg.paths.clinician_cases) cases = cfg.resolve(*cfg.paths.clinician_cases);
            auto k = load_knowledge(criteria, cases);
            rejected.insert(rejected.end(), k.rejected.begin(), k.rejected.end());
            note("knowledge: " + std::to_string(k.pairs.size()) + " pairs");
            return std::move(k.pairs);
        });

        auto assembled = stage("assemble", [&] {
            const auto renderer = make_renderer(cfg.renderer, offline, cfg.endpoint);
            auto a = assembler::assemble(records, knowledge_pairs, cfg.ablation, *renderer);
            note("assemble: " + std::to_string(a.pairs.size()) + " pairs via " + renderer->name() + " renderer, " +
                 std::to_string(a.rejected.size()) + " rejected");
            return a;
        });
        rejected.insert(rejected.end(), assembled.rejected.begin(), assembled.rejected.end());

        auto split = stage("split", [&] {
            auto s = assembler::split(assembled.pairs, cfg.split_ratio, cfg.split_seed, cfg.grouping);
            note("split: " + std::to_string(s.train.size()) + " train, " + std::to_string(s.test.size()) +
                 " test (" + std::string(assembler::to_string(s.grouping)) + ", target " +
                 std::to_string(s.target_test) + ")");
            return s;
        });

        stage("emit", [&] {
            assembler::emit_jsonl(split, staging);
            write_json(staging / "rejections.json", rejections_json(rejected));
            write_json(staging / "config.json", to_json(cfg));
            note("emit: train.jsonl, test.jsonl, split_manifest.json (" + assembler::manifest_hash(split) + ")");
            std::string text;
            for (const auto& l : log) text += l + "\n";
            write_text(staging / "stages.log", text);
            return 0;
        });

        const fs::path previous = parent / ("." + out_dir.filename().string() + ".previous");
        fs::remove_all(previous);
        if (fs::exists(out_dir)) fs::rename(out_dir, previous);
        fs::rename(staging, out_dir);
        fs::remove_all(previous);

        return PipelineResult{out_dir, split.train.size(), split.test.size(), rejected.size()};
    } catch (...) {
        std::error_code ec;
        fs::remove_all(staging, ec);
        throw;
    }
}

// --- command line ---------------------------------------------------------------

namespace {

struct EndpointFlags {
    std::string renderer = "deterministic";
    bool offline = false;
    llm::EndpointConfig endpoint;

    void add_to(CLI::App* app) {
        app->add_option("--renderer", renderer, "deterministic or llm")
            ->check(CLI::IsMember({"deterministic", "llm"}));
        app->add_flag("--offline", offline, "force the deterministic renderer");
        app->add_option("--endpoint-url", endpoint.base_url, "chat-completions base URL");
        app->add_option("--endpoint-path", endpoint.path);
        app->add_option("--model", endpoint.model);
        app->add_option("--temperature", endpoint.temperature);
        app->add_option("--llm-seed", endpoint.seed);
        app->add_option("--timeout", endpoint.timeout_s, "seconds");
        app->add_option("--max-retries", endpoint.max_retries);
        app->add_option("--rate-limit", endpoint.rate_limit_per_s, "requests per second");
        app->add_option("--concurrency", endpoint.concurrency);
        app->add_option("--api-key-env", endpoint.api_key_env);
        app->add_option("--audit-log", endpoint.audit_log);
    }

    std::unique_ptr<assembler::Renderer> renderer_obj() const {
        return make_renderer(renderer == "llm" ? RendererKind::Llm : RendererKind::Deterministic, offline, endpoint);
    }
};

assembler::AblationConfig parse_ablation_flags(const std::string& flags) {
    assembler::AblationConfig cfg{false, false, false, false};
    std::stringstream ss(flags);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item == "metadata") cfg.include_metadata = true;
        else if (item == "morphology") cfg.include_morphology = true;
        else if (item == "mg_expression") cfg.include_mg_expression = true;
        else if (item == "real_diagnoses") cfg.include_real_diagnoses = true;
        else if (!item.empty()) throw Error("invalid_ablation", "unknown ablation flag '" + item + "'");
    }
    cfg.validate();
    return cfg;
}

void print_error(std::ostream& err, const std::string& code, const std::string& message,
                 const std::string& stage_name = {}) {
    json j{{"error", code}, {"message", message}};
    if (!stage_name.empty()) j["stage"] = stage_name;
    err << j.dump() << std::endl;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Meibography morphometry and clinical report dataset pipeline"};
    app.require_subcommand(1);
    app.name("meibo");

    // quantify
    auto* quantify = app.add_subcommand("quantify", "Quantify labeled gland masks");
    fs::path q_masks, q_out;
    std::optional<fs::path> q_images;
    std::size_t q_workers = 0;
    quantify->add_option("--masks", q_masks, "directory of <stem>.png masks with <stem>.json sidecars")->required();
    quantify->add_option("--images", q_images, "directory of matching grayscale images");
    quantify->add_option("--out", q_out, "output directory")->required();
    quantify->add_option("--workers", q_workers);

    // ingest
    auto* ingest = app.add_subcommand("ingest", "Validate the clinical table and attach morphology");
    fs::path i_clinical, i_out;
    std::optional<fs::path> i_morph, i_criteria, i_cases;
    ingest->add_option("--clinical", i_clinical, "clinical table (.csv or .json)")->required();
    ingest->add_option("--morphology", i_morph, "directory written by quantify");
    ingest->add_option("--criteria", i_criteria, "trial criteria CSV");
    ingest->add_option("--cases", i_cases, "clinician cases JSON");
    ingest->add_option("--out", i_out, "output directory")->required();

    // summarize
    auto* summarize = app.add_subcommand("summarize", "Render records as Q&A pairs");
    fs::path s_records, s_out;
    EndpointFlags s_flags;
    summarize->add_option("--records", s_records, "records.json or clinical table")->required();
    summarize->add_option("--out", s_out, "output JSONL")->required();
    s_flags.add_to(summarize);

    // assemble
    auto* assemble = app.add_subcommand("assemble", "Build and split the fine-tuning dataset");
    fs::path a_records, a_out;
    std::optional<fs::path> a_knowledge;
    double a_ratio = 0.9;
    std::uint64_t a_seed = 0;
    std::string a_grouping = "by_subject", a_ablation = "metadata,morphology,mg_expression,real_diagnoses";
    EndpointFlags a_flags;
    assemble->add_option("--records", a_records, "records.json or clinical table")->required();
    assemble->add_option("--knowledge", a_knowledge, "knowledge JSONL written by ingest");
    assemble->add_option("--out", a_out, "output directory")->required();
    assemble->add_option("--ratio", a_ratio, "train fraction")->check(CLI::Range(0.0, 1.0));
    assemble->add_option("--seed", a_seed);
    assemble->add_option("--grouping", a_grouping)->check(CLI::IsMember({"by_subject", "by_record"}));
    assemble->add_option("--ablation", a_ablation, "enabled fields, e.g. metadata,morphology");
    a_flags.add_to(assemble);

    // evaluate
    auto* evaluate = app.add_subcommand("evaluate", "Score predictions against truth labels");
    std::vector<std::string> e_predictions, e_ablations;
    fs::path e_truth;
    std::optional<fs::path> e_out, e_manifest;
    std::string e_policy = "count_as_wrong", e_layout = "comparison";
    evaluate->add_option("--predictions", e_predictions, "[NAME=]PATH of a predictions JSONL; repeatable")
        ->required();
    evaluate->add_option("--truth", e_truth, "records.json or clinical table")->required();
    evaluate->add_option("--policy", e_policy)->check(CLI::IsMember({"count_as_wrong", "exclude"}));
    evaluate->add_option("--layout", e_layout)->check(CLI::IsMember({"comparison", "ablation"}));
    evaluate->add_option("--ablation", e_ablations, "enabled fields per predictions file; repeatable");
    evaluate->add_option("--manifest", e_manifest, "split manifest to fingerprint");
    evaluate->add_option("--out", e_out, "directory for report.json and tables");

    // pipeline
    auto* pipeline = app.add_subcommand("pipeline", "Run every stage from a config file");
    fs::path p_config;
    bool p_offline = false;
    pipeline->add_option("--config", p_config, "pipeline JSON config")->required();
    pipeline->add_flag("--offline", p_offline, "force the deterministic renderer");

    // mock-llm
    auto* mock = app.add_subcommand("mock-llm", "Serve a local mock chat-completions endpoint");
    std::string m_host = "127.0.0.1";
    int m_port = 8089;
    llm::MockLlmServer::Options m_opts;
    mock->add_option("--host", m_host);
    mock->add_option("--port", m_port);
    mock->add_option("--fail-first", m_opts.fail_first, "answer the first N requests with --fail-status");
    mock->add_option("--fail-status", m_opts.fail_status);
    mock->add_flag("--empty-body", m_opts.empty_body);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return 0;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return 0;
    } catch (const CLI::ParseError& e) {
        print_error(err, "usage", e.what());
        return 2;
    }

    try {
        if (quantify->parsed()) {
            const auto rep = quantify_dir(q_masks, q_images, q_out, q_workers);
            out << json{{"outputs", rep.outputs.size()}, {"failures", rep.failures}}.dump() << '\n';
        } else if (ingest->parsed()) {
            fs::create_directories(i_out);
            auto parsed = clinical::parse_clinical_table(i_clinical);
            std::vector<morph::EyelidMorphology> morphs;
            if (i_morph) morphs = load_morphology_dir(*i_morph);
            auto joined = clinical::join_morphology(std::move(parsed.records), morphs);
            write_json(i_out / "records.json", clinical::to_json(joined.records));
            json rows = json::array();
            for (const auto& r : parsed.rejected)
                rows.push_back({{"row", r.row}, {"subject_eye_id", r.subject_eye_id}, {"reason", r.reason}});
            json report{{"records", joined.records.size()},
                        {"rows_rejected", rows},
                        {"warnings", parsed.warnings},
                        {"join", clinical::to_json(joined.report)}};
            if (i_criteria || i_cases) {
                auto k = load_knowledge(i_criteria, i_cases);
                std::string lines;
                for (const auto& p : k.pairs) lines += assembler::jsonl_line(p, false).dump() + "\n";
                write_text(i_out / "knowledge.jsonl", lines);
                report["knowledge_pairs"] = k.pairs.size();
                report["knowledge_rejected"] = rejections_json(k.rejected);
            }
            write_json(i_out / "ingest_report.json", report);
            out << report.dump() << '\n';
        } else if (summarize->parsed()) {
            const auto records = load_records(s_records);
            const auto results = s_flags.renderer_obj()->render(records);
            std::string lines;
            json rejected = json::array();
            std::size_t n = 0;
            for (std::size_t i = 0; i < results.size(); ++i) {
                if (results[i].pair) {
                    lines += summarizer::to_json(*results[i].pair).dump() + "\n";
                    ++n;
                } else {
                    rejected.push_back({{"id", records[i].subject_eye_id}, {"reason", results[i].error}});
                }
            }
            if (s_out.has_parent_path()) fs::create_directories(s_out.parent_path());
            write_text(s_out, lines);
            out << json{{"pairs", n}, {"rejected", rejected}}.dump() << '\n';
        } else if (assemble->parsed()) {
            const auto cfg = parse_ablation_flags(a_ablation);
            if (!(a_ratio > 0.0 && a_ratio < 1.0)) throw Error("invalid_ratio", "--ratio must lie in (0, 1)");
            const auto records = load_records(a_records);
            std::vector<summarizer::QAPair> knowledge_pairs;
            if (a_knowledge) knowledge_pairs = assembler::read_jsonl(*a_knowledge);
            const auto assembled = assembler::assemble(records, knowledge_pairs, cfg, *a_flags.renderer_obj());
            const auto s = assembler::split(assembled.pairs, a_ratio, a_seed, *assembler::parse_grouping(a_grouping));
            assembler::emit_jsonl(s, a_out);
            write_json(a_out / "rejections.json", rejections_json(assembled.rejected));
            out << json{{"train", s.train.size()},
                        {"test", s.test.size()},
                        {"rejected", assembled.rejected.size()},
                        {"manifest_sha256", assembler::manifest_hash(s)}}
                       .dump()
                << '\n';
        } else if (evaluate->parsed()) {
            if (!e_ablations.empty() && e_ablations.size() != e_predictions.size())
                throw Error("usage", "--ablation must be given once per --predictions");
            const auto truth = load_records(e_truth);
            const auto policy = *eval::parse_policy(e_policy);
            std::string manifest_sha;
            if (e_manifest) {
                std::ifstream in(*e_manifest);
                if (!in) throw Error("missing_file", "cannot open " + e_manifest->string());
                try {
                    manifest_sha = sha256_hex(json::parse(in).dump());
                } catch (const json::exception& ex) {
                    throw Error("malformed_manifest", e_manifest->string() + ": " + ex.what());
                }
            }
            std::vector<eval::EvalReport> reports;
            for (std::size_t i = 0; i < e_predictions.size(); ++i) {
                std::string name, path = e_predictions[i];
                if (auto eq = path.find('='); eq != std::string::npos) {
                    name = path.substr(0, eq);
                    path = path.substr(eq + 1);
                } else {
                    name = fs::path(path).stem().string();
                }
                auto report = eval::score(eval::read_predictions(path), truth, policy);
                report.model_name = name;
                report.split_manifest_hash = manifest_sha;
                if (!e_ablations.empty()) report.ablation = assembler::to_json(parse_ablation_flags(e_ablations[i]));
                reports.push_back(std::move(report));
            }
            const auto tables = eval::render_tables(
                reports, e_layout == "ablation" ? eval::TableLayout::Ablation : eval::TableLayout::Comparison);
            if (e_out) {
                fs::create_directories(*e_out);
                json arr = json::array();
                for (const auto& r : reports) arr.push_back(eval::to_json(r));
                write_json(*e_out / "report.json", arr);
                write_text(*e_out / "tables.txt", tables.text);
                write_text(*e_out / "tables.csv", tables.csv);
            }
            out << tables.text;
            for (const auto& r : reports) {
                if (eval::has_empty_disease(r)) {
                    print_error(err, "empty_disease",
                                "model " + r.model_name + " has a disease with no scored positives or negatives");
                    return 3;
                }
            }
        } else if (pipeline->parsed()) {
            const auto cfg = stage("validate", [&] { return load_config(p_config); });
            const auto res = run_pipeline(cfg, p_offline, &out);
            out << json{{"output_dir", res.output_dir.string()},
                        {"train", res.train},
                        {"test", res.test},
                        {"rejected", res.rejected}}
                       .dump()
                << '\n';
        } else if (mock->parsed()) {
            llm::MockLlmServer server(m_opts);
            out << json{{"listening", "http://" + m_host + ":" + std::to_string(m_port)}}.dump() << std::endl;
            server.listen(m_host, m_port);
        }
    } catch (const StageError& e) {
        print_error(err, e.code(), e.what(), e.stage());
        return 1;
    } catch (const Error& e) {
        print_error(err, e.code(), e.what());
        return 1;
    } catch (const fs::filesystem_error& e) {
        print_error(err, "io_error", e.what());
        return 1;
    } catch (const std::exception& e) {
        print_error(err, "internal", e.what());
        return 1;
    }
    return 0;
}

}  // namespace meibo::cli
