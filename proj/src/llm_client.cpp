#include "meibo/llm_client.hpp"

#include <cstdlib>
#include <fstream>
#include <thread>

#include <httplib.h>

#include "meibo/hashing.hpp"
#include "meibo/parallel.hpp"

namespace meibo::llm {

using nlohmann::json;

namespace {

std::mutex audit_mutex;

void audit(const EndpointConfig& cfg, const std::string& request, const std::string& response, int status,
           int attempts) {
    if (!cfg.audit_log) return;
    json entry{{"model", cfg.model},
               {"url", cfg.base_url + cfg.path},
               {"request_sha256", sha256_hex(request)},
               {"response_sha256", sha256_hex(response)},
               {"status", status},
               {"attempts", attempts}};
    std::lock_guard lock(audit_mutex);
    std::ofstream out(*cfg.audit_log, std::ios::app);
    out << entry.dump() << '\n';
}

bool retryable(int status) { return status == 429 || status >= 500; }

std::string call_with(const summarizer::PromptBundle& bundle, const EndpointConfig& cfg, TokenBucket* bucket) {
    const std::string body = make_request(bundle, cfg).dump();

    httplib::Client client(cfg.base_url);
    const auto timeout = std::chrono::milliseconds(static_cast<long>(cfg.timeout_s * 1000.0));
    client.set_connection_timeout(timeout);
    client.set_read_timeout(timeout);
    client.set_write_timeout(timeout);

    httplib::Headers headers;
    if (const char* key = std::getenv(cfg.api_key_env.c_str()); key && *key)
        headers.emplace("Authorization", std::string("Bearer ") + key);

    const int attempts_allowed = std::max(0, cfg.max_retries) + 1;
    double backoff = cfg.retry_backoff_s;
    int last_status = 0;
    std::string last_cause;
    for (int attempt = 1; attempt <= attempts_allowed; ++attempt) {
        if (bucket) bucket->acquire();
        auto res = client.Post(cfg.path, headers, body, "application/json");
        if (res) {
            last_status = res->status;
            if (res->status >= 200 && res->status < 300) {
                audit(cfg, body, res->body, res->status, attempt);
                return extract_completion(res->body);
            }
            last_cause = "HTTP " + std::to_string(res->status);
            if (!retryable(res->status)) {
                audit(cfg, body, res->body, res->status, attempt);
                throw TransportError("endpoint rejected request: " + last_cause, last_status, attempt);
            }
        } else {
            last_status = 0;
            last_cause = httplib::to_string(res.error());
        }
        if (attempt < attempts_allowed && backoff > 0) {
            std::this_thread::sleep_for(std::chrono::duration<double>(backoff));
            backoff *= 2;
        }
    }
    audit(cfg, body, "", last_status, attempts_allowed);
    throw TransportError("summarizer endpoint failed after " + std::to_string(attempts_allowed) +
                             " attempts: " + last_cause,
                         last_status, attempts_allowed);
}

}  // namespace

json to_json(const EndpointConfig& cfg) {
    json j{{"base_url", cfg.base_url},
           {"path", cfg.path},
           {"model", cfg.model},
           {"temperature", cfg.temperature},
           {"seed", cfg.seed ? json(*cfg.seed) : json(nullptr)},
           {"timeout_s", cfg.timeout_s},
           {"max_retries", cfg.max_retries},
           {"retry_backoff_s", cfg.retry_backoff_s},
           {"rate_limit_per_s", cfg.rate_limit_per_s},
           {"concurrency", cfg.concurrency},
           {"api_key_env", cfg.api_key_env},
           {"audit_log", cfg.audit_log ? json(cfg.audit_log->string()) : json(nullptr)}};
    return j;
}

EndpointConfig endpoint_from_json(const json& j) {
    EndpointConfig cfg;
    if (!j.is_object()) throw Error("invalid_config", "endpoint config must be an object");
    try {
        cfg.base_url = j.value("base_url", cfg.base_url);
        cfg.path = j.value("path", cfg.path);
        cfg.model = j.value("model", cfg.model);
        cfg.temperature = j.value("temperature", cfg.temperature);
        if (auto it = j.find("seed"); it != j.end() && !it->is_null()) cfg.seed = it->get<long>();
        cfg.timeout_s = j.value("timeout_s", cfg.timeout_s);
        cfg.max_retries = j.value("max_retries", cfg.max_retries);
        cfg.retry_backoff_s = j.value("retry_backoff_s", cfg.retry_backoff_s);
        cfg.rate_limit_per_s = j.value("rate_limit_per_s", cfg.rate_limit_per_s);
        cfg.concurrency = j.value("concurrency", cfg.concurrency);
        cfg.api_key_env = j.value("api_key_env", cfg.api_key_env);
        if (auto it = j.find("audit_log"); it != j.end() && !it->is_null())
            cfg.audit_log = std::filesystem::path(it->get<std::string>());
    } catch (const json::exception& e) {
        throw Error("invalid_config", std::string("endpoint config: ") + e.what());
    }
    if (cfg.max_retries < 0) throw Error("invalid_config", "endpoint.max_retries must be >= 0");
    if (cfg.concurrency == 0) throw Error("invalid_config", "endpoint.concurrency must be positive");
    if (cfg.timeout_s <= 0) throw Error("invalid_config", "endpoint.timeout_s must be positive");
    return cfg;
}

TokenBucket::TokenBucket(double rate_per_s)
    : rate_(rate_per_s), capacity_(std::max(1.0, rate_per_s)), tokens_(capacity_), last_(Clock::now()) {}

void TokenBucket::acquire() {
    if (rate_ <= 0) return;
    std::unique_lock lock(mutex_);
    for (;;) {
        const auto now = Clock::now();
        tokens_ = std::min(capacity_, tokens_ + std::chrono::duration<double>(now - last_).count() * rate_);
        last_ = now;
        if (tokens_ >= 1.0) {
            tokens_ -= 1.0;
            return;
        }
        const double wait = (1.0 - tokens_) / rate_;
        lock.unlock();
        std::this_thread::sleep_for(std::chrono::duration<double>(wait));
        lock.lock();
    }
}

json make_request(const summarizer::PromptBundle& bundle, const EndpointConfig& cfg) {
    json messages = json::array();
    for (const auto& m : bundle.messages()) messages.push_back({{"role", m.role}, {"content", m.content}});
    json req{{"model", cfg.model}, {"messages", messages}, {"temperature", cfg.temperature}};
    if (cfg.seed) req["seed"] = *cfg.seed;
    return req;
}

std::string extract_completion(std::string_view body) {
    if (body.find_first_not_of(" \t\r\n") == std::string_view::npos) throw Error("empty_response", "empty response");
    json j;
    try {
        j = json::parse(body);
    } catch (const json::exception& e) {
        throw Error("malformed_response", std::string("completion body is not JSON: ") + e.what());
    }
    const json* content = nullptr;
    if (j.is_object() && j.contains("choices") && j["choices"].is_array() && !j["choices"].empty()) {
        const json& first = j["choices"][0];
        if (first.contains("message") && first["message"].contains("content")) content = &first["message"]["content"];
        else if (first.contains("text")) content = &first["text"];
    }
    if (!content || !content->is_string()) throw Error("empty_response", "empty response");
    const auto& text = content->get_ref<const std::string&>();
    if (text.find_first_not_of(" \t\r\n") == std::string::npos) throw Error("empty_response", "empty response");
    return text;
}

std::string call_summarizer(const summarizer::PromptBundle& bundle, const EndpointConfig& cfg) {
    TokenBucket bucket(cfg.rate_limit_per_s);
    return call_with(bundle, cfg, &bucket);
}

std::vector<BatchOutcome> call_summarizer_batch(const std::vector<summarizer::PromptBundle>& bundles,
                                                const EndpointConfig& cfg) {
    TokenBucket bucket(cfg.rate_limit_per_s);
    std::vector<BatchOutcome> out(bundles.size());
    parallel_for(bundles.size(), cfg.concurrency, [&](std::size_t i) {
        try {
            out[i].text = call_with(bundles[i], cfg, &bucket);
        } catch (const std::exception& e) {
            out[i].error = e.what();
        }
    });
    return out;
}

}  // namespace meibo::llm
