#pragma once

#include <atomic>
#include <cstdint>
#include <deque>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

namespace scribe {

struct ChatRequest {
    std::string system_prompt;
    std::string user_prompt;
    double temperature = 0.0;
    int max_output = 1024;
    std::optional<std::uint64_t> seed;
};

struct EmbeddingVector {
    std::vector<double> values;

    std::size_t dim() const { return values.size(); }

    bool operator==(const EmbeddingVector&) const = default;
};

class ChatBackend {
public:
    virtual ~ChatBackend() = default;

    // Returns the model's text response. Throws BackendError / BudgetError.
    virtual std::string chat(const ChatRequest& request) = 0;

    virtual std::uint64_t call_count() const = 0;
};

class EmbedBackend {
public:
    virtual ~EmbedBackend() = default;

    // One vector per input text, all with identical dimension.
    virtual std::vector<EmbeddingVector> embed(const std::vector<std::string>& texts) = 0;

    virtual std::uint64_t call_count() const = 0;
};

// Thread-safe total-call budget shared by the backends. 0 means unlimited.
class CallBudget {
public:
    explicit CallBudget(std::uint64_t max_calls = 0) : max_calls_(max_calls) {}

    void set_limit(std::uint64_t max_calls) { max_calls_ = max_calls; }

    // Throws BudgetError once the configured count is exceeded.
    void charge(const std::string& what);

    std::uint64_t used() const { return used_.load(); }

private:
    std::atomic<std::uint64_t> max_calls_;
    std::atomic<std::uint64_t> used_{0};
};

// Key for the mock fixture table: hash of (system prompt, user prompt).
std::string prompt_key(const std::string& system_prompt, const std::string& user_prompt);

// Deterministic chat backend for offline runs and tests. Resolution order:
// handler, then scripted response queue, then fixed fixture; an unmatched
// prompt is a BackendError so tests fail loudly instead of drifting.
class MockChatBackend : public ChatBackend {
public:
    using Handler = std::function<std::optional<std::string>(const ChatRequest&)>;

    void set_handler(Handler handler) { handler_ = std::move(handler); }
    void add_fixture(const std::string& system_prompt, const std::string& user_prompt,
                     std::string response);
    void add_fixture_for_key(const std::string& key, std::string response);
    // Queued responses consumed in order; the last one repeats when exhausted.
    void add_script(const std::string& system_prompt, const std::string& user_prompt,
                    std::vector<std::string> responses);

    void set_call_budget(std::uint64_t max_calls) { budget_.set_limit(max_calls); }

    std::string chat(const ChatRequest& request) override;
    std::uint64_t call_count() const override { return budget_.used(); }

private:
    Handler handler_;
    std::unordered_map<std::string, std::string> fixtures_;
    std::unordered_map<std::string, std::deque<std::string>> scripts_;
    CallBudget budget_;
    std::mutex mutex_;
};

// Deterministic embedding backend: SHA-256 of the text seeds a PRNG that
// emits a unit vector, so identical text always maps to the identical vector.
class MockEmbedBackend : public EmbedBackend {
public:
    explicit MockEmbedBackend(std::size_t dim = 64) : dim_(dim) {}

    void set_call_budget(std::uint64_t max_calls) { budget_.set_limit(max_calls); }

    std::vector<EmbeddingVector> embed(const std::vector<std::string>& texts) override;
    std::uint64_t call_count() const override { return budget_.used(); }

    std::size_t dim() const { return dim_; }

private:
    std::size_t dim_;
    CallBudget budget_;
};

EmbeddingVector hash_embedding(const std::string& text, std::size_t dim);

}  // namespace scribe
