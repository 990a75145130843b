#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>

#include "scribe/backend.hpp"

namespace scribe {

struct HttpBackendConfig {
    std::string api_base = "https://api.openai.com/v1";
    std::string api_key;
    std::string chat_model = "gpt-5-mini";
    std::string embed_model = "text-embedding-3-small";
    int max_retries = 3;
    int backoff_base_ms = 500;
    double backoff_factor = 2.0;
    bool backoff_jitter = true;
    int max_concurrent = 8;
    std::uint64_t max_calls = 0;  // 0 = unlimited
    int timeout_sec = 120;
    // Wire temperature used when a request leaves its own at the 0 default.
    double default_temperature = 0.0;

    // Reads SCRIBE_API_BASE, SCRIBE_API_KEY, SCRIBE_JUDGE_MODEL and
    // SCRIBE_EMBED_MODEL on top of the defaults above.
    static HttpBackendConfig from_env();
};

struct HttpResponse {
    int status = 0;  // 0 = transport failure
    std::string body;
};

// Injectable transport: POST json body to api_base + path. The default
// transport uses cpp-httplib; tests substitute a stub.
using HttpTransport = std::function<HttpResponse(const std::string& path, const std::string& json_body)>;

HttpTransport default_http_transport(const HttpBackendConfig& config);

// Shared retry/limiter/budget state so one process-wide budget covers both
// chat and embedding traffic when the two backends are built together.
class HttpSession {
public:
    explicit HttpSession(HttpBackendConfig config, HttpTransport transport = nullptr);

    // POSTs with bounded concurrency, retrying 429/5xx/transport failures
    // with exponential backoff. Throws BackendError / BudgetError.
    std::string post_json(const std::string& path, const std::string& body, const std::string& what);

    std::uint64_t calls_used() const { return budget_->used(); }
    const HttpBackendConfig& config() const { return config_; }

private:
    HttpBackendConfig config_;
    HttpTransport transport_;
    std::shared_ptr<CallBudget> budget_;
    struct Limiter;
    std::shared_ptr<Limiter> limiter_;
};

class HttpChatBackend : public ChatBackend {
public:
    explicit HttpChatBackend(std::shared_ptr<HttpSession> session) : session_(std::move(session)) {}

    std::string chat(const ChatRequest& request) override;
    std::uint64_t call_count() const override { return session_->calls_used(); }

private:
    std::shared_ptr<HttpSession> session_;
};

class HttpEmbedBackend : public EmbedBackend {
public:
    explicit HttpEmbedBackend(std::shared_ptr<HttpSession> session) : session_(std::move(session)) {}

    std::vector<EmbeddingVector> embed(const std::vector<std::string>& texts) override;
    std::uint64_t call_count() const override { return session_->calls_used(); }

private:
    std::shared_ptr<HttpSession> session_;
};

}  // namespace scribe
