#include "scribe/backend.hpp"

#include <random>

#include "scribe/errors.hpp"
#include "scribe/rng.hpp"
#include "scribe/sha256.hpp"
#include "scribe/vecmath.hpp"

namespace scribe {

void CallBudget::charge(const std::string& what) {
    const std::uint64_t limit = max_calls_.load();
    const std::uint64_t used = ++used_;
    if (limit != 0 && used > limit) {
        --used_;
        throw BudgetError(what + ": call budget of " + std::to_string(limit) + " exhausted");
    }
}

std::string prompt_key(const std::string& system_prompt, const std::string& user_prompt) {
    return sha256_hex(system_prompt + "\x1e" + user_prompt);
}

void MockChatBackend::add_fixture(const std::string& system_prompt, const std::string& user_prompt,
                                  std::string response) {
    add_fixture_for_key(prompt_key(system_prompt, user_prompt), std::move(response));
}

void MockChatBackend::add_fixture_for_key(const std::string& key, std::string response) {
    std::lock_guard<std::mutex> lock(mutex_);
    fixtures_[key] = std::move(response);
}

void MockChatBackend::add_script(const std::string& system_prompt, const std::string& user_prompt,
                                 std::vector<std::string> responses) {
    std::lock_guard<std::mutex> lock(mutex_);
    auto& queue = scripts_[prompt_key(system_prompt, user_prompt)];
    for (auto& r : responses) {
        queue.push_back(std::move(r));
    }
}

std::string MockChatBackend::chat(const ChatRequest& request) {
    if (request.system_prompt.empty() || request.user_prompt.empty()) {
        throw std::invalid_argument("chat: prompts must be non-empty");
    }
    budget_.charge("mock chat");

    if (handler_) {
        if (auto r = handler_(request)) {
            return *r;
        }
    }

    const std::string key = prompt_key(request.system_prompt, request.user_prompt);
    std::lock_guard<std::mutex> lock(mutex_);
    if (auto it = scripts_.find(key); it != scripts_.end() && !it->second.empty()) {
        std::string response = it->second.front();
        if (it->second.size() > 1) {
            it->second.pop_front();
        }
        return response;
    }
    if (auto it = fixtures_.find(key); it != fixtures_.end()) {
        return it->second;
    }
    throw BackendError("mock chat: no fixture for prompt key " + key.substr(0, 12));
}

EmbeddingVector hash_embedding(const std::string& text, std::size_t dim) {
    std::mt19937_64 rng(sha256_seed(text));
    EmbeddingVector v;
    v.values.resize(dim);
    for (std::size_t i = 0; i < dim; ++i) {
        v.values[i] = gaussian(rng);
    }
    const double n = norm(v.values);
    if (n > 0.0) {
        for (double& x : v.values) {
            x /= n;
        }
    } else {
        v.values.assign(dim, 0.0);
        v.values[0] = 1.0;
    }
    return v;
}

std::vector<EmbeddingVector> MockEmbedBackend::embed(const std::vector<std::string>& texts) {
    if (texts.empty()) {
        throw std::invalid_argument("embed: input text list must be non-empty");
    }
    budget_.charge("mock embed");
    std::vector<EmbeddingVector> out;
    out.reserve(texts.size());
    for (const auto& t : texts) {
        out.push_back(hash_embedding(t, dim_));
    }
    return out;
}

}  // namespace scribe
