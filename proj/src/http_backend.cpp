#include "scribe/http_backend.hpp"

#include <chrono>
#include <cmath>
#include <condition_variable>
#include <cstdlib>
#include <mutex>
#include <random>
#include <thread>

#include <json.hpp>

#include "scribe/errors.hpp"

#ifdef SCRIBE_USE_OPENSSL
#define CPPHTTPLIB_OPENSSL_SUPPORT
#endif
#include <httplib.h>

namespace scribe {

using nlohmann::json;

namespace {

std::string env_or(const char* name, const std::string& fallback) {
    const char* v = std::getenv(name);
    return v ? std::string(v) : fallback;
}

}  // namespace

HttpBackendConfig HttpBackendConfig::from_env() {
    HttpBackendConfig c;
    c.api_base = env_or("SCRIBE_API_BASE", c.api_base);
    c.api_key = env_or("SCRIBE_API_KEY", c.api_key);
    c.chat_model = env_or("SCRIBE_JUDGE_MODEL", c.chat_model);
    c.embed_model = env_or("SCRIBE_EMBED_MODEL", c.embed_model);
    return c;
}

HttpTransport default_http_transport(const HttpBackendConfig& config) {
    // Split "scheme://host[:port]/prefix" into the client base and the
    // path prefix httplib expects.
    std::string base = config.api_base;
    std::string host_part = base;
    std::string prefix;
    const auto scheme_end = base.find("://");
    const std::size_t host_start = scheme_end == std::string::npos ? 0 : scheme_end + 3;
    const auto slash = base.find('/', host_start);
    if (slash != std::string::npos) {
        host_part = base.substr(0, slash);
        prefix = base.substr(slash);
        if (!prefix.empty() && prefix.back() == '/') {
            prefix.pop_back();
        }
    }

    const std::string api_key = config.api_key;
    const int timeout = config.timeout_sec;
    return [host_part, prefix, api_key, timeout](const std::string& path,
                                                 const std::string& body) -> HttpResponse {
        httplib::Client client(host_part);
        client.set_connection_timeout(timeout);
        client.set_read_timeout(timeout);
        httplib::Headers headers;
        if (!api_key.empty()) {
            headers.emplace("Authorization", "Bearer " + api_key);
        }
        auto res = client.Post(prefix + path, headers, body, "application/json");
        if (!res) {
            return {0, httplib::to_string(res.error())};
        }
        return {res->status, res->body};
    };
}

struct HttpSession::Limiter {
    explicit Limiter(int max_in_flight) : max_in_flight(max_in_flight) {}

    void acquire() {
        std::unique_lock<std::mutex> lock(mutex);
        cv.wait(lock, [&] { return in_flight < max_in_flight; });
        ++in_flight;
    }

    void release() {
        {
            std::lock_guard<std::mutex> lock(mutex);
            --in_flight;
        }
        cv.notify_one();
    }

    int max_in_flight;
    int in_flight = 0;
    std::mutex mutex;
    std::condition_variable cv;
};

HttpSession::HttpSession(HttpBackendConfig config, HttpTransport transport)
    : config_(std::move(config)),
      transport_(transport ? std::move(transport) : default_http_transport(config_)),
      budget_(std::make_shared<CallBudget>(config_.max_calls)),
      limiter_(std::make_shared<Limiter>(config_.max_concurrent > 0 ? config_.max_concurrent : 1)) {}

std::string HttpSession::post_json(const std::string& path, const std::string& body,
                                   const std::string& what) {
    budget_->charge(what);

    std::mt19937_64 jitter_rng(std::random_device{}());
    std::string last_error;
    for (int attempt = 0; attempt <= config_.max_retries; ++attempt) {
        if (attempt > 0) {
            double delay_ms = double(config_.backoff_base_ms);
            for (int i = 1; i < attempt; ++i) {
                delay_ms *= config_.backoff_factor;
            }
            if (config_.backoff_jitter) {
                delay_ms *= 0.5 + double(jitter_rng() >> 11) * 0x1.0p-53;
            }
            std::this_thread::sleep_for(std::chrono::milliseconds(long(delay_ms)));
        }

        HttpResponse res;
        limiter_->acquire();
        try {
            res = transport_(path, body);
        } catch (...) {
            limiter_->release();
            throw;
        }
        limiter_->release();

        if (res.status >= 200 && res.status < 300) {
            return res.body;
        }
        last_error = "HTTP " + std::to_string(res.status) +
                     (res.body.empty() ? "" : ": " + res.body.substr(0, 200));
        const bool transient = res.status == 0 || res.status == 429 || res.status >= 500;
        if (!transient) {
            break;
        }
    }
    throw BackendError(what + " failed after retries: " + last_error);
}

std::string HttpChatBackend::chat(const ChatRequest& request) {
    if (request.system_prompt.empty() || request.user_prompt.empty()) {
        throw std::invalid_argument("chat: prompts must be non-empty");
    }
    json body;
    body["model"] = session_->config().chat_model;
    body["messages"] = json::array({
        json{{"role", "system"}, {"content", request.system_prompt}},
        json{{"role", "user"}, {"content", request.user_prompt}},
    });
    body["temperature"] = request.temperature == 0.0 ? session_->config().default_temperature
                                                     : request.temperature;
    body["max_tokens"] = request.max_output;
    if (request.seed.has_value()) {
        body["seed"] = *request.seed;
    }

    const std::string raw = session_->post_json("/chat/completions", body.dump(), "chat");
    try {
        const json j = json::parse(raw);
        return j.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const json::exception& e) {
        throw BackendError(std::string("chat: malformed completion response: ") + e.what());
    }
}

std::vector<EmbeddingVector> HttpEmbedBackend::embed(const std::vector<std::string>& texts) {
    if (texts.empty()) {
        throw std::invalid_argument("embed: input text list must be non-empty");
    }
    json body;
    body["model"] = session_->config().embed_model;
    body["input"] = texts;

    const std::string raw = session_->post_json("/embeddings", body.dump(), "embed");
    try {
        const json j = json::parse(raw);
        const json& data = j.at("data");
        if (data.size() != texts.size()) {
            throw BackendError("embed: response count " + std::to_string(data.size()) +
                               " does not match input count " + std::to_string(texts.size()));
        }
        std::vector<EmbeddingVector> out(texts.size());
        for (const auto& item : data) {
            const std::size_t idx = item.at("index").get<std::size_t>();
            if (idx >= out.size()) {
                throw BackendError("embed: response index out of range");
            }
            out[idx].values = item.at("embedding").get<std::vector<double>>();
        }
        const std::size_t dim = out.front().dim();
        for (const auto& v : out) {
            if (v.dim() != dim || v.dim() == 0) {
                throw BackendError("embed: inconsistent embedding dimensions in response");
            }
            for (double x : v.values) {
                if (!std::isfinite(x)) {
                    throw BackendError("embed: non-finite value in embedding response");
                }
            }
        }
        return out;
    } catch (const json::exception& e) {
        throw BackendError(std::string("embed: malformed embeddings response: ") + e.what());
    }
}

}  // namespace scribe
