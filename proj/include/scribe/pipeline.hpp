#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "scribe/backend.hpp"
#include "scribe/clustering.hpp"
#include "scribe/http_backend.hpp"

namespace scribe {

struct BackendSettings {
    bool mock = false;
    std::string api_base = "https://api.openai.com/v1";
    std::string judge_model = "gpt-5-mini";
    std::string embed_model = "text-embedding-3-small";
    int embed_dim = 64;  // mock embedder dimension
    double temperature = 0.0;
    int max_output = 1024;
    int max_retries = 3;
    int backoff_base_ms = 500;
    double backoff_factor = 2.0;
    int max_concurrent = 8;
    std::uint64_t max_calls = 0;

    bool operator==(const BackendSettings&) const = default;
};

struct PipelineConfig {
    double w_p = 0.3;            // process-reward weight; outcome gets 1 - w_p
    int group_size = 8;          // rollouts per problem
    int refresh_interval = 1000; // training steps between prototype refreshes
    int rollout_count = 64;      // R: rollouts per subgoal for mid-level metrics
    int trials = 5;              // T: executions per candidate plan
    double tau_hi = 0.5;
    double tau_lo = 0.0;
    int min_support = 10;
    double advantage_eps = 1e-8;
    double kl_coeff = 0.0;       // passed through to the external trainer
    double entropy_coeff = 0.0;  // passed through to the external trainer
    bool half_credit_ties = false;
    std::uint64_t seed = 0;
    ClusterParams cluster;
    BackendSettings backend;

    bool operator==(const PipelineConfig&) const = default;
};

nlohmann::json config_to_json(const PipelineConfig& config);
PipelineConfig config_from_json(const nlohmann::json& j);
PipelineConfig load_config(const std::filesystem::path& path);
void save_config(const PipelineConfig& config, const std::filesystem::path& path);

enum class Stage {
    kDecompose,
    kCluster,
    kDistill,
    kRoute,
    kJudge,
    kCalibrate,
    kReward,
    kAdvantages,
    kMetrics,
    kRefresh,
};

std::string to_string(Stage stage);

struct FileHash {
    std::string path;
    std::string hash;

    bool operator==(const FileHash&) const = default;
};

struct StageRecord {
    std::string stage;
    std::string cache_key;
    std::vector<FileHash> inputs;
    std::vector<FileHash> outputs;
    std::string config_hash;
    int stage_version = 1;
    std::string timestamp;
    bool cache_hit = false;
    std::uint64_t chat_calls = 0;
    std::uint64_t embed_calls = 0;
};

struct RunManifest {
    std::vector<StageRecord> records;

    const StageRecord* latest(const std::string& stage) const;
    // Most recent recorded output hash for a path, if any stage produced it.
    std::optional<std::string> produced_hash(const std::string& path) const;
};

nlohmann::json manifest_to_json(const RunManifest& manifest);
RunManifest manifest_from_json(const nlohmann::json& j);

// External input files consumed by the pipeline.
struct PipelineInputs {
    std::filesystem::path corpus;
    std::filesystem::path rollouts;  // optional; empty disables mid metrics
    std::filesystem::path plans;     // optional; empty disables plan metrics
};

// Orchestrates the batch stages in a working directory with content-hash
// caching, atomic outputs and a per-directory lock.
class Pipeline {
public:
    Pipeline(std::filesystem::path workdir, PipelineConfig config);
    ~Pipeline();

    Pipeline(const Pipeline&) = delete;
    Pipeline& operator=(const Pipeline&) = delete;

    // Runs one stage (cache-aware) and returns its manifest record.
    StageRecord run_stage(Stage stage, const PipelineInputs& inputs);

    // decompose .. metrics in order.
    std::vector<StageRecord> run_all(const PipelineInputs& inputs);

    // Re-composes rewards for each w_p value from the cached judge scores and
    // calibration table; writes and returns the sweep report.
    nlohmann::json sweep_wp(const std::vector<double>& values);

    // True when the orchestrator should refresh clusters and the library.
    static bool refresh_tick(long step_counter, const PipelineConfig& config);

    const std::filesystem::path& workdir() const { return workdir_; }
    const PipelineConfig& config() const { return config_; }
    const RunManifest& manifest() const { return manifest_; }

    std::filesystem::path stage_output(Stage stage) const;

    ChatBackend& chat_backend() { return *chat_; }
    EmbedBackend& embed_backend() { return *embed_; }

private:
    struct StagePlan;
    StagePlan plan_stage(Stage stage, const PipelineInputs& inputs) const;

    void load_manifest();
    void save_manifest() const;

    std::filesystem::path workdir_;
    PipelineConfig config_;
    std::string config_hash_;
    RunManifest manifest_;
    std::shared_ptr<ChatBackend> chat_;
    std::shared_ptr<EmbedBackend> embed_;
    int lock_fd_ = -1;
};

std::string hash_file(const std::filesystem::path& path);

}  // namespace scribe
