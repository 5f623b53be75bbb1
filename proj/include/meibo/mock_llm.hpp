#pragma once

#include <atomic>
#include <memory>
#include <string>
#include <thread>

namespace meibo::llm {

/// Local chat-completions endpoint answering with deterministic renderings of
/// whatever records the prompt carries after the metadata request sentence.
class MockLlmServer {
public:
    struct Options {
        int fail_first = 0;    // leading requests answered with fail_status
        int fail_status = 500;
        bool empty_body = false;  // 200 with a 0-byte body
    };

    MockLlmServer();
    explicit MockLlmServer(Options options);
    ~MockLlmServer();

    MockLlmServer(const MockLlmServer&) = delete;
    MockLlmServer& operator=(const MockLlmServer&) = delete;

    /// Binds and serves on a background thread; port 0 picks a free port.
    /// Returns the bound port.
    int start(const std::string& host = "127.0.0.1", int port = 0);

    /// Serves on the calling thread until stop().
    void listen(const std::string& host, int port);

    void stop();

    int requests() const { return requests_.load(); }
    std::string base_url() const;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
    Options options_;
    std::atomic<int> requests_{0};
    std::string host_;
    int port_ = 0;
    std::thread thread_;
};

inline constexpr const char* kMockRefusal =
    "I could not find any clinical metadata in the request to summarize.";

/// Body of the mock's reply to a chat request body; throws on malformed JSON.
std::string mock_completion_text(const std::string& request_body);

}  // namespace meibo::llm
