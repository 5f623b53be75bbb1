#pragma once

#include <chrono>
#include <filesystem>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "meibo/error.hpp"
#include "meibo/summarizer.hpp"

namespace meibo::llm {

struct EndpointConfig {
    std::string base_url = "https://api.openai.com";
    std::string path = "/v1/chat/completions";
    std::string model = "gpt-4";
    double temperature = 0.0;
    std::optional<long> seed;
    double timeout_s = 60.0;
    int max_retries = 2;
    double retry_backoff_s = 0.5;  // doubled after each failed attempt
    double rate_limit_per_s = 0.0;  // <= 0 disables the bucket
    std::size_t concurrency = 4;
    std::string api_key_env = "OPENAI_API_KEY";
    std::optional<std::filesystem::path> audit_log;
};

nlohmann::json to_json(const EndpointConfig& cfg);
EndpointConfig endpoint_from_json(const nlohmann::json& j);

/// Raised once retries are exhausted or on a non-retryable status.
class TransportError : public Error {
public:
    TransportError(const std::string& message, int last_status, int attempts)
        : Error("transport_error", message), last_status_(last_status), attempts_(attempts) {}

    /// HTTP status of the final attempt; 0 when no response arrived.
    int last_status() const noexcept { return last_status_; }
    int attempts() const noexcept { return attempts_; }

private:
    int last_status_;
    int attempts_;
};

/// Classic token bucket; capacity is max(1, rate).
class TokenBucket {
public:
    explicit TokenBucket(double rate_per_s);
    void acquire();

private:
    using Clock = std::chrono::steady_clock;
    double rate_;
    double capacity_;
    double tokens_;
    Clock::time_point last_;
    std::mutex mutex_;
};

/// Chat-completions request body {model, messages, temperature[, seed]}.
nlohmann::json make_request(const summarizer::PromptBundle& bundle, const EndpointConfig& cfg);

/// First choice's message content; throws "empty response" when absent or blank.
std::string extract_completion(std::string_view body);

/// Sends one bundle and returns the completion text verbatim. Retries 5xx,
/// 429 and transport failures up to cfg.max_retries times; other statuses
/// fail immediately.
std::string call_summarizer(const summarizer::PromptBundle& bundle, const EndpointConfig& cfg);

struct BatchOutcome {
    std::optional<std::string> text;
    std::string error;
};

/// Issues the bundles with at most cfg.concurrency requests in flight, sharing
/// one rate limiter. Outcome i belongs to bundles[i].
std::vector<BatchOutcome> call_summarizer_batch(const std::vector<summarizer::PromptBundle>& bundles,
                                                const EndpointConfig& cfg);

}  // namespace meibo::llm
