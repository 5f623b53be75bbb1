#include "meibo/mock_llm.hpp"

#include "meibo/error.hpp"
#include "meibo/summarizer.hpp"

// After the Eigen-based headers: resolv.h, reached through httplib, defines `_res`.
#include <httplib.h>
#include <json.hpp>

namespace meibo::llm {

using nlohmann::json;

struct MockLlmServer::Impl {
    httplib::Server server;
};

namespace {

std::string render_payload(std::string_view content) {
    const auto at = content.rfind(summarizer::kMetadataRequest);
    if (at == std::string_view::npos) return {};
    const auto brace = content.find('{', at);
    if (brace == std::string_view::npos) return {};
    const auto payload = nlohmann::ordered_json::parse(content.begin() + static_cast<std::ptrdiff_t>(brace),
                                                       content.end(), nullptr, false);
    if (payload.is_discarded() || !payload.is_object()) return {};

    std::vector<clinical::ClinicalRecord> records;
    try {
        records = summarizer::records_from_metadata(payload);
    } catch (const Error&) {
        return {};
    }
    std::string out;
    for (const auto& r : records) {
        try {
            const auto pair = summarizer::render_report_deterministic(r);
            if (!out.empty()) out += "\n\n";
            out += summarizer::format_pair(pair);
        } catch (const Error&) {
        }
    }
    return out;
}

}  // namespace

std::string mock_completion_text(const std::string& request_body) {
    const json req = json::parse(request_body);  // throws on malformed input
    if (!req.is_object() || !req.contains("messages") || !req["messages"].is_array())
        throw Error("malformed_request", "request lacks a messages array");
    const auto& messages = req["messages"];
    for (auto it = messages.rbegin(); it != messages.rend(); ++it) {
        if (!it->is_object() || !it->contains("content") || !(*it)["content"].is_string()) continue;
        std::string text = render_payload((*it)["content"].get<std::string>());
        if (!text.empty()) return text;
    }
    return kMockRefusal;
}

MockLlmServer::MockLlmServer() : MockLlmServer(Options{}) {}

MockLlmServer::MockLlmServer(Options options) : impl_(std::make_unique<Impl>()), options_(options) {
    impl_->server.Post(".*", [this](const httplib::Request& req, httplib::Response& res) {
        const int n = ++requests_;
        if (n <= options_.fail_first) {
            res.status = options_.fail_status;
            res.set_content(R"({"error":"injected failure"})", "application/json");
            return;
        }
        if (options_.empty_body) {
            res.status = 200;
            return;
        }
        std::string text;
        try {
            text = mock_completion_text(req.body);
        } catch (const std::exception& e) {
            res.status = 400;
            res.set_content(json{{"error", e.what()}}.dump(), "application/json");
            return;
        }
        json reply{{"id", "mock-" + std::to_string(n)},
                   {"object", "chat.completion"},
                   {"choices",
                    json::array({{{"index", 0},
                                  {"message", {{"role", "assistant"}, {"content", text}}},
                                  {"finish_reason", "stop"}}})}};
        res.status = 200;
        res.set_content(reply.dump(), "application/json");
    });
}

MockLlmServer::~MockLlmServer() { stop(); }

int MockLlmServer::start(const std::string& host, int port) {
    host_ = host;
    if (port == 0) {
        port_ = impl_->server.bind_to_any_port(host);
        if (port_ < 0) throw Error("bind_failed", "cannot bind mock endpoint on " + host);
    } else {
        if (!impl_->server.bind_to_port(host, port))
            throw Error("bind_failed", "cannot bind mock endpoint on " + host + ":" + std::to_string(port));
        port_ = port;
    }
    thread_ = std::thread([this] { impl_->server.listen_after_bind(); });
    impl_->server.wait_until_ready();
    return port_;
}

void MockLlmServer::listen(const std::string& host, int port) {
    host_ = host;
    port_ = port;
    if (!impl_->server.listen(host, port))
        throw Error("bind_failed", "cannot serve mock endpoint on " + host + ":" + std::to_string(port));
}

void MockLlmServer::stop() {
    impl_->server.stop();
    if (thread_.joinable()) thread_.join();
}

std::string MockLlmServer::base_url() const { return "http://" + host_ + ":" + std::to_string(port_); }

}  // namespace meibo::llm
