#include <fstream>
#include <set>
#include <sstream>

#include <gtest/gtest.h>
#include <json.hpp>

#include "meibo/assembler.hpp"
#include "meibo/clinical.hpp"
#include "meibo/error.hpp"
#include "meibo/knowledge.hpp"
#include "synthetic.hpp"

namespace {

using namespace meibo;
using namespace meibo::assembler;
using summarizer::QASource;

clinical::ClinicalRecord record_42() {
    std::ifstream in(synth::fixture("record_42_2_R.json"));
    return clinical::record_from_json(nlohmann::json::parse(in));
}

std::vector<QAPair> fixture_knowledge() {
    auto pairs =
        knowledge::criteria_to_qa(knowledge::ingest_trial_criteria(synth::fixture("trial_criteria.csv")).criteria)
            .pairs;
    for (auto& p : knowledge::cases_to_qa(knowledge::load_clinician_cases(synth::fixture("clinician_cases.json"))))
        pairs.push_back(p);
    return pairs;
}

std::vector<QAPair> record_pairs(const std::vector<std::string>& ids) {
    std::vector<QAPair> out;
    for (const auto& id : ids) {
        QAPair p;
        p.id = id;
        p.question = "Subject " + id + ".";
        p.answer = "ok";
        out.push_back(p);
    }
    return out;
}

std::size_t count_reason(const Assembled& a, const std::string& reason) {
    return std::ranges::count_if(a.rejected, [&](const Rejection& r) { return r.reason == reason; });
}

TEST(Ablation, ValidationAndJson) {
    AblationConfig cfg;
    EXPECT_NO_THROW(cfg.validate());
    cfg.include_metadata = false;
    EXPECT_THROW(cfg.validate(), Error);
    cfg = {false, false, false, false};
    EXPECT_NO_THROW(cfg.validate());

    AblationConfig partial{true, false, true, false};
    EXPECT_EQ(ablation_from_json(to_json(partial)), partial);
    EXPECT_THROW(ablation_from_json(nlohmann::json{{"include_metadata", false}}), Error);
    EXPECT_THROW(ablation_from_json(nlohmann::json{{"include_morphology", "yes"}}), Error);
}

TEST(Ablation, DropsFieldsKeepsLabels) {
    std::mt19937_64 rng(1);
    const auto r = synth::random_full_record(rng, "3_1_L");
    const auto v = apply_ablation(r, {true, false, false, true});
    EXPECT_FALSE(v.morphology);
    EXPECT_FALSE(v.mg_expression_quality);
    EXPECT_FALSE(v.mg_expression_quantity);
    EXPECT_EQ(v.osdi, r.osdi);
    EXPECT_EQ(v.labels, r.labels);

    const auto q = summarizer::render_report_deterministic(v).question;
    EXPECT_EQ(q.find("morphology"), std::string::npos);
    EXPECT_EQ(q.find("expression"), std::string::npos);
}

TEST(Assemble, GoldenRecordPair) {
    const auto out = assemble({record_42()}, {}, {}, DeterministicRenderer(1));
    ASSERT_EQ(out.pairs.size(), 1u);
    EXPECT_TRUE(out.rejected.empty());
    EXPECT_NE(out.pairs[0].question.find("average tortuosity is 0.27."), std::string::npos);
    EXPECT_EQ(out.pairs[0].source, QASource::DeterministicTemplate);
}

TEST(Assemble, CountsAndGating) {
    std::mt19937_64 rng(2);
    std::vector<clinical::ClinicalRecord> records;
    for (int i = 0; i < 12; ++i) records.push_back(synth::random_full_record(rng, std::to_string(i + 1) + "_1_R"));
    records[3].labels.mgd = TriState::Unknown;
    records[7].labels = {};
    const auto knowledge = fixture_knowledge();  // 4 trial + 2 clinician

    const auto full = assemble(records, knowledge, {}, DeterministicRenderer());
    EXPECT_EQ(full.pairs.size(), 10u + 6u);
    EXPECT_EQ(count_reason(full, "record has Unknown labels"), 2u);
    EXPECT_EQ(full.rejected.size(), 2u);
    // Records first, then trial knowledge, then clinician cases.
    EXPECT_EQ(full.pairs[10].source, QASource::TrialKnowledge);
    EXPECT_EQ(full.pairs.back().source, QASource::ClinicianCase);

    const auto no_real = assemble(records, knowledge, {true, true, true, false}, DeterministicRenderer());
    EXPECT_EQ(no_real.pairs.size(), 10u + 4u);
    EXPECT_EQ(count_reason(no_real, "clinician cases excluded by ablation"), 2u);

    const auto none = assemble(records, knowledge, {false, false, false, false}, DeterministicRenderer());
    EXPECT_EQ(none.pairs.size(), 4u);
    EXPECT_EQ(count_reason(none, "metadata excluded by ablation"), 12u);

    const auto no_morph = assemble(records, {}, {true, false, true, true}, DeterministicRenderer());
    for (const auto& p : no_morph.pairs) EXPECT_FALSE(p.has_morphology);
}

TEST(Assemble, EveryInputIsAccountedFor) {
    std::mt19937_64 rng(3);
    auto knowledge = fixture_knowledge();
    QAPair stray;
    stray.id = "stray";
    stray.source = QASource::DeterministicTemplate;
    knowledge.push_back(stray);
    knowledge.push_back(knowledge.front());  // duplicate id

    for (int trial = 0; trial < 20; ++trial) {
        std::vector<clinical::ClinicalRecord> records;
        const int n = 1 + static_cast<int>(rng() % 30);
        for (int i = 0; i < n; ++i) {
            auto r = synth::random_full_record(rng, std::to_string(i + 1) + "_2_L");
            if (rng() % 4 == 0) r.labels.blepharitis = TriState::Unknown;
            records.push_back(r);
        }
        AblationConfig cfg{true, rng() % 2 == 0, rng() % 2 == 0, rng() % 2 == 0};
        const auto out = assemble(records, knowledge, cfg, DeterministicRenderer(2));
        EXPECT_EQ(out.pairs.size() + out.rejected.size(), records.size() + knowledge.size());
        std::set<std::string> ids;
        for (const auto& p : out.pairs) EXPECT_TRUE(ids.insert(p.id).second);
    }
}

TEST(Assemble, RenderFailuresAreItemized) {
    clinical::ClinicalRecord bare;
    bare.subject_eye_id = "5_1_R";
    bare.labels = {TriState::Yes, TriState::No, TriState::No};
    const auto out = assemble({bare}, {}, {}, DeterministicRenderer());
    EXPECT_TRUE(out.pairs.empty());
    ASSERT_EQ(out.rejected.size(), 1u);
    EXPECT_EQ(out.rejected[0].stage, "render");
    EXPECT_EQ(out.rejected[0].reason, "empty record");
}

TEST(Split, TenSubjectsGiveNineAndOne) {
    const auto ids = synth::synthetic_ids(10, 10, 1);
    const auto s = split(record_pairs(ids), 0.9, 42);
    EXPECT_EQ(s.train.size(), 9u);
    EXPECT_EQ(s.test.size(), 1u);
    EXPECT_EQ(s.target_test, 1u);
}

TEST(Split, LargePopulationByRecord) {
    const auto pairs = record_pairs(synth::synthetic_ids(878, 3513, 5));
    const auto s = split(pairs, 0.9, 1, Grouping::ByRecord);
    EXPECT_EQ(s.test.size(), 351u);
    EXPECT_EQ(s.train.size(), 3162u);
}

TEST(Split, LargePopulationBySubjectIsDisjoint) {
    const auto pairs = record_pairs(synth::synthetic_ids(878, 3513, 5));
    const auto s = split(pairs, 0.9, 1, Grouping::BySubject);
    EXPECT_EQ(s.train.size() + s.test.size(), 3513u);
    EXPECT_GE(s.test.size(), 351u);
    std::set<std::string> train_patients;
    for (const auto& p : s.train) train_patients.insert(clinical::patient_of(p.id));
    for (const auto& p : s.test) EXPECT_FALSE(train_patients.count(clinical::patient_of(p.id))) << p.id;
    // The last group added overshoots by less than one group.
    std::map<std::string, std::size_t> per_patient;
    for (const auto& p : pairs) ++per_patient[clinical::patient_of(p.id)];
    std::size_t largest = 0;
    for (const auto& [_, n] : per_patient) largest = std::max(largest, n);
    EXPECT_LT(s.test.size(), 351u + largest);
}

TEST(Split, DeterministicAndOrderInvariant) {
    auto pairs = record_pairs(synth::synthetic_ids(40, 120, 9));
    for (auto& k : fixture_knowledge()) pairs.push_back(k);
    const auto a = split(pairs, 0.8, 77);
    const auto b = split(pairs, 0.8, 77);
    EXPECT_EQ(manifest_hash(a), manifest_hash(b));

    std::mt19937_64 rng(1);
    std::shuffle(pairs.begin(), pairs.end(), rng);
    EXPECT_EQ(manifest_hash(split(pairs, 0.8, 77)), manifest_hash(a));
    EXPECT_NE(manifest_hash(split(pairs, 0.8, 78)), manifest_hash(a));
}

TEST(Split, KnowledgeStaysInTrain) {
    auto pairs = record_pairs(synth::synthetic_ids(20, 50, 3));
    for (auto& k : fixture_knowledge()) pairs.push_back(k);
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const auto s = split(pairs, 0.5, seed);
        for (const auto& p : s.test) EXPECT_FALSE(p.is_knowledge());
        EXPECT_EQ(std::ranges::count_if(s.train, [](const QAPair& p) { return p.is_knowledge(); }), 6);
        EXPECT_EQ(s.target_test, 25u);
    }
}

TEST(Split, BothSidesNonEmpty) {
    const auto pairs = record_pairs({"1_1_L", "2_1_L"});
    for (double ratio : {0.01, 0.5, 0.99}) {
        const auto s = split(pairs, ratio, 3);
        EXPECT_EQ(s.train.size(), 1u);
        EXPECT_EQ(s.test.size(), 1u);
    }
}

TEST(Split, Errors) {
    const auto one_patient = record_pairs({"1_1_L", "1_1_R", "1_2_L"});
    try {
        split(one_patient, 0.9, 1);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), "too_few_groups");
    }
    EXPECT_NO_THROW(split(one_patient, 0.9, 1, Grouping::ByRecord));
    EXPECT_THROW(split(one_patient, 1.0, 1, Grouping::ByRecord), Error);
    EXPECT_THROW(split(one_patient, 0.0, 1, Grouping::ByRecord), Error);
    EXPECT_THROW(split(record_pairs({"1_1_L", "1_1_L", "2_1_L"}), 0.5, 1), Error);
}

TEST(Split, ManifestCounts) {
    auto pairs = record_pairs(synth::synthetic_ids(10, 30, 2));
    pairs[0].has_morphology = true;
    for (auto& k : fixture_knowledge()) pairs.push_back(k);
    const auto s = split(pairs, 0.9, 4);
    const auto m = manifest_json(s);
    EXPECT_EQ(m["counts"]["train"]["knowledge"], 6);
    EXPECT_EQ(m["counts"]["train"]["total"].get<std::size_t>() + m["counts"]["test"]["total"].get<std::size_t>(),
              pairs.size());
    EXPECT_EQ(m["counts"]["train"]["image_metadata"].get<int>() + m["counts"]["test"]["image_metadata"].get<int>(), 1);
    EXPECT_EQ(m["grouping"], "by_subject");
    EXPECT_EQ(manifest_hash(s).size(), 64u);
}

TEST(Emit, JsonlLinesRoundTrip) {
    auto r = record_42();
    r.race = "Asian \"East\"";
    auto pairs = assemble({r, [] {
                               auto o = record_42();
                               o.subject_eye_id = "43_1_L";
                               return o;
                           }()},
                          fixture_knowledge(), {}, DeterministicRenderer())
                     .pairs;
    const auto s = split(pairs, 0.5, 9);
    synth::TempDir dir;
    const auto files = emit_jsonl(s, dir.path());

    std::ifstream in(files.train);
    std::string line;
    while (std::getline(in, line)) {
        const auto j = nlohmann::json::parse(line);
        const std::string text = j["text"];
        EXPECT_EQ(text.find("###Human:"), text.rfind("###Human:"));
        EXPECT_EQ(text.find("###Human:"), 0u);
    }
    for (const auto& p : s.train) {
        if (p.id == "42_2_R" || p.id == "43_1_L")
            EXPECT_TRUE(p.answer.ends_with("the Blepharitis is also Yes."));
    }

    const auto train = read_jsonl(files.train);
    const auto test = read_jsonl(files.test);
    auto same = [](const std::vector<QAPair>& a, const std::vector<QAPair>& b) {
        ASSERT_EQ(a.size(), b.size());
        for (std::size_t i = 0; i < a.size(); ++i) {
            EXPECT_EQ(a[i].id, b[i].id);
            EXPECT_EQ(a[i].question, b[i].question);
            EXPECT_EQ(a[i].answer, b[i].answer);
            EXPECT_EQ(a[i].source, b[i].source);
            EXPECT_EQ(a[i].labels, b[i].labels);
            EXPECT_EQ(a[i].has_morphology, b[i].has_morphology);
        }
    };
    same(train, s.train);
    same(test, s.test);

    std::ifstream t(files.test);
    std::getline(t, line);
    const auto j = nlohmann::json::parse(line);
    EXPECT_TRUE(j["question_only"].get<std::string>().ends_with("###Assistant:"));
    EXPECT_NE(j["text"].get<std::string>().find("\"East\""), std::string::npos);

    std::ifstream manifest(files.manifest);
    EXPECT_EQ(nlohmann::json::parse(manifest), manifest_json(s));
}

TEST(Emit, MalformedLineIsAnError) {
    synth::TempDir dir;
    std::ofstream(dir / "x.jsonl") << R"({"id":"a","text":"no markers","labels":{},"source":"clinician_case"})" << "\n";
    EXPECT_THROW(read_jsonl(dir / "x.jsonl"), Error);
}

}  // namespace
