#include <cstdlib>
#include <fstream>

#include <gtest/gtest.h>
#include <json.hpp>

#include "meibo/clinical.hpp"
#include "meibo/error.hpp"
#include "meibo/llm_client.hpp"
#include "meibo/mock_llm.hpp"
#include "meibo/summarizer.hpp"
#include "synthetic.hpp"

// Last: resolv.h, reached through httplib, defines `_res`.
#include <httplib.h>

namespace {

using namespace meibo;
using namespace meibo::llm;
using nlohmann::json;

clinical::ClinicalRecord record_42() {
    std::ifstream in(synth::fixture("record_42_2_R.json"));
    return clinical::record_from_json(json::parse(in));
}

EndpointConfig local(const MockLlmServer& server) {
    EndpointConfig cfg;
    cfg.base_url = server.base_url();
    cfg.model = "mock";
    cfg.retry_backoff_s = 0.01;
    cfg.timeout_s = 5;
    cfg.seed = 7;
    return cfg;
}

TEST(Endpoint, ConfigRoundTrip) {
    EndpointConfig cfg;
    cfg.model = "m";
    cfg.seed = 3;
    cfg.rate_limit_per_s = 2.5;
    cfg.audit_log = "/tmp/audit.jsonl";
    const auto back = endpoint_from_json(to_json(cfg));
    EXPECT_EQ(back.model, "m");
    EXPECT_EQ(back.seed, 3);
    EXPECT_DOUBLE_EQ(back.rate_limit_per_s, 2.5);
    EXPECT_EQ(back.audit_log, cfg.audit_log);
    EXPECT_THROW(endpoint_from_json(json{{"max_retries", -1}}), Error);
    EXPECT_THROW(endpoint_from_json(json{{"concurrency", 0}}), Error);
}

TEST(Endpoint, RequestBody) {
    EndpointConfig cfg;
    cfg.seed = 11;
    const auto body = make_request(summarizer::build_prompt({record_42()}), cfg);
    EXPECT_EQ(body["model"], "gpt-4");
    EXPECT_EQ(body["temperature"], 0.0);
    EXPECT_EQ(body["seed"], 11);
    ASSERT_EQ(body["messages"].size(), 2u);
    EXPECT_EQ(body["messages"][0]["role"], "system");
}

TEST(Endpoint, ExtractCompletion) {
    EXPECT_EQ(extract_completion(R"({"choices":[{"message":{"content":"hi"}}]})"), "hi");
    EXPECT_EQ(extract_completion(R"({"choices":[{"text":"legacy"}]})"), "legacy");
    for (const char* bad : {"", "{}", R"({"choices":[]})", R"({"choices":[{"message":{"content":"  "}}]})"}) {
        try {
            extract_completion(bad);
            FAIL() << bad;
        } catch (const Error& e) {
            EXPECT_EQ(std::string(e.what()), "empty response") << bad;
        }
    }
}

TEST(Mock, CompletionTextRendersPayload) {
    const auto bundle = summarizer::build_prompt({record_42()});
    EndpointConfig cfg;
    const std::string text = mock_completion_text(make_request(bundle, cfg).dump());
    const auto parsed = summarizer::parse_summary(text);
    ASSERT_EQ(parsed.pairs.size(), 1u);
    EXPECT_EQ(parsed.pairs[0].id, "42_2_R");
    EXPECT_EQ(mock_completion_text(R"({"messages":[{"role":"user","content":"hello"}]})"), kMockRefusal);
    EXPECT_ANY_THROW(mock_completion_text("{oops"));
}

TEST(Client, RoundTripThroughMock) {
    MockLlmServer server;
    server.start();
    const std::string text = call_summarizer(summarizer::build_prompt({record_42()}), local(server));
    const auto parsed = summarizer::parse_summary(text);
    ASSERT_EQ(parsed.pairs.size(), 1u);
    EXPECT_EQ(parsed.pairs[0].labels, record_42().labels);
    EXPECT_EQ(server.requests(), 1);
}

TEST(Client, RetriesThenGivesUp) {
    MockLlmServer server({.fail_first = 100, .fail_status = 500});
    server.start();
    auto cfg = local(server);
    cfg.max_retries = 2;
    try {
        call_summarizer(summarizer::build_prompt({record_42()}), cfg);
        FAIL() << "expected TransportError";
    } catch (const TransportError& e) {
        EXPECT_EQ(e.attempts(), 3);
        EXPECT_EQ(e.last_status(), 500);
        EXPECT_EQ(e.code(), "transport_error");
    }
    EXPECT_EQ(server.requests(), 3);
}

TEST(Client, RecoversAfterTransientFailures) {
    MockLlmServer server({.fail_first = 2, .fail_status = 429});
    server.start();
    const auto text = call_summarizer(summarizer::build_prompt({record_42()}), local(server));
    EXPECT_FALSE(text.empty());
    EXPECT_EQ(server.requests(), 3);
}

TEST(Client, ClientErrorsAreNotRetried) {
    MockLlmServer server({.fail_first = 100, .fail_status = 401});
    server.start();
    try {
        call_summarizer(summarizer::build_prompt({record_42()}), local(server));
        FAIL();
    } catch (const TransportError& e) {
        EXPECT_EQ(e.attempts(), 1);
        EXPECT_EQ(e.last_status(), 401);
    }
    EXPECT_EQ(server.requests(), 1);
}

TEST(Client, EmptyBodyIsEmptyResponse) {
    MockLlmServer server({.empty_body = true});
    server.start();
    try {
        call_summarizer(summarizer::build_prompt({record_42()}), local(server));
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(std::string(e.what()), "empty response");
    }
}

TEST(Client, UnreachableEndpointReportsNoStatus) {
    EndpointConfig cfg;
    cfg.base_url = "http://127.0.0.1:1";
    cfg.max_retries = 1;
    cfg.retry_backoff_s = 0.01;
    cfg.timeout_s = 2;
    try {
        call_summarizer(summarizer::build_prompt({record_42()}), cfg);
        FAIL();
    } catch (const TransportError& e) {
        EXPECT_EQ(e.last_status(), 0);
        EXPECT_EQ(e.attempts(), 2);
    }
}

TEST(Client, BatchKeepsOrderAndWritesAudit) {
    MockLlmServer server;
    server.start();
    synth::TempDir dir;
    auto cfg = local(server);
    cfg.audit_log = dir / "audit.jsonl";
    cfg.concurrency = 3;
    cfg.rate_limit_per_s = 50;

    std::mt19937_64 rng(4);
    std::vector<summarizer::PromptBundle> bundles;
    std::vector<std::string> ids;
    for (int i = 0; i < 5; ++i) {
        ids.push_back(std::to_string(i + 1) + "_1_R");
        bundles.push_back(summarizer::build_prompt({synth::random_full_record(rng, ids.back())}));
    }
    const auto outcomes = call_summarizer_batch(bundles, cfg);
    ASSERT_EQ(outcomes.size(), 5u);
    for (int i = 0; i < 5; ++i) {
        ASSERT_TRUE(outcomes[i].text) << outcomes[i].error;
        EXPECT_EQ(summarizer::parse_summary(*outcomes[i].text).pairs.at(0).id, ids[i]);
    }

    std::ifstream in(*cfg.audit_log);
    std::string line;
    int lines = 0;
    while (std::getline(in, line)) {
        const auto j = json::parse(line);
        EXPECT_EQ(j["model"], "mock");
        EXPECT_EQ(j["status"], 200);
        EXPECT_EQ(j["request_sha256"].get<std::string>().size(), 64u);
        ++lines;
    }
    EXPECT_EQ(lines, 5);
}

TEST(Mock, MalformedRequestGets400) {
    MockLlmServer server;
    const int port = server.start();
    httplib::Client client("127.0.0.1", port);
    const auto res = client.Post("/v1/chat/completions", "{oops", "application/json");
    ASSERT_TRUE(res);
    EXPECT_EQ(res->status, 400);
}

TEST(TokenBucket, LimitsRate) {
    TokenBucket bucket(20);
    const auto t0 = std::chrono::steady_clock::now();
    for (int i = 0; i < 30; ++i) bucket.acquire();
    const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    EXPECT_GE(elapsed, 0.4);
}

}  // namespace
