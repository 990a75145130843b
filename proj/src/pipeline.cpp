#include "scribe/pipeline.hpp"

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>

#include "scribe/errors.hpp"
#include "scribe/metrics.hpp"
#include "scribe/mock_demo.hpp"
#include "scribe/parallel.hpp"
#include "scribe/prototype.hpp"
#include "scribe/reward.hpp"
#include "scribe/router.hpp"
#include "scribe/sha256.hpp"
#include "scribe/trajectory.hpp"

namespace scribe {

namespace fs = std::filesystem;
using nlohmann::json;

// ---------------------------------------------------------------------------
// Config serialization
// ---------------------------------------------------------------------------

json config_to_json(const PipelineConfig& c) {
    json j;
    j["w_p"] = c.w_p;
    j["group_size"] = c.group_size;
    j["refresh_interval"] = c.refresh_interval;
    j["rollout_count"] = c.rollout_count;
    j["trials"] = c.trials;
    j["tau_hi"] = c.tau_hi;
    j["tau_lo"] = c.tau_lo;
    j["min_support"] = c.min_support;
    j["advantage_eps"] = c.advantage_eps;
    j["kl_coeff"] = c.kl_coeff;
    j["entropy_coeff"] = c.entropy_coeff;
    j["half_credit_ties"] = c.half_credit_ties;
    j["seed"] = c.seed;
    j["cluster"] = {{"min_cluster_size", c.cluster.min_cluster_size},
                    {"min_samples", c.cluster.min_samples},
                    {"k_fallback", c.cluster.k_fallback},
                    {"metric", c.cluster.metric},
                    {"seed", c.cluster.seed}};
    j["backend"] = {{"mock", c.backend.mock},
                    {"api_base", c.backend.api_base},
                    {"judge_model", c.backend.judge_model},
                    {"embed_model", c.backend.embed_model},
                    {"embed_dim", c.backend.embed_dim},
                    {"temperature", c.backend.temperature},
                    {"max_output", c.backend.max_output},
                    {"max_retries", c.backend.max_retries},
                    {"backoff_base_ms", c.backend.backoff_base_ms},
                    {"backoff_factor", c.backend.backoff_factor},
                    {"max_concurrent", c.backend.max_concurrent},
                    {"max_calls", c.backend.max_calls}};
    return j;
}

PipelineConfig config_from_json(const json& j) {
    PipelineConfig c;
    c.w_p = j.value("w_p", c.w_p);
    c.group_size = j.value("group_size", c.group_size);
    c.refresh_interval = j.value("refresh_interval", c.refresh_interval);
    c.rollout_count = j.value("rollout_count", c.rollout_count);
    c.trials = j.value("trials", c.trials);
    c.tau_hi = j.value("tau_hi", c.tau_hi);
    c.tau_lo = j.value("tau_lo", c.tau_lo);
    c.min_support = j.value("min_support", c.min_support);
    c.advantage_eps = j.value("advantage_eps", c.advantage_eps);
    c.kl_coeff = j.value("kl_coeff", c.kl_coeff);
    c.entropy_coeff = j.value("entropy_coeff", c.entropy_coeff);
    c.half_credit_ties = j.value("half_credit_ties", c.half_credit_ties);
    c.seed = j.value("seed", c.seed);
    if (j.contains("cluster")) {
        const json& k = j["cluster"];
        c.cluster.min_cluster_size = k.value("min_cluster_size", c.cluster.min_cluster_size);
        c.cluster.min_samples = k.value("min_samples", c.cluster.min_samples);
        c.cluster.k_fallback = k.value("k_fallback", c.cluster.k_fallback);
        c.cluster.metric = k.value("metric", c.cluster.metric);
        c.cluster.seed = k.value("seed", c.cluster.seed);
    }
    if (j.contains("backend")) {
        const json& b = j["backend"];
        c.backend.mock = b.value("mock", c.backend.mock);
        c.backend.api_base = b.value("api_base", c.backend.api_base);
        c.backend.judge_model = b.value("judge_model", c.backend.judge_model);
        c.backend.embed_model = b.value("embed_model", c.backend.embed_model);
        c.backend.embed_dim = b.value("embed_dim", c.backend.embed_dim);
        c.backend.temperature = b.value("temperature", c.backend.temperature);
        c.backend.max_output = b.value("max_output", c.backend.max_output);
        c.backend.max_retries = b.value("max_retries", c.backend.max_retries);
        c.backend.backoff_base_ms = b.value("backoff_base_ms", c.backend.backoff_base_ms);
        c.backend.backoff_factor = b.value("backoff_factor", c.backend.backoff_factor);
        c.backend.max_concurrent = b.value("max_concurrent", c.backend.max_concurrent);
        c.backend.max_calls = b.value("max_calls", c.backend.max_calls);
    }
    if (c.w_p < 0.0 || c.w_p > 1.0) {
        throw ConfigError("w_p must lie in [0,1]");
    }
    if (c.group_size < 2) {
        throw ConfigError("group_size must be at least 2");
    }
    return c;
}

PipelineConfig load_config(const fs::path& path) {
    try {
        return config_from_json(json::parse(read_file(path)));
    } catch (const json::exception& e) {
        throw ConfigError("config " + path.string() + ": " + e.what());
    }
}

void save_config(const PipelineConfig& config, const fs::path& path) {
    write_file_atomic(path, config_to_json(config).dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// Manifest
// ---------------------------------------------------------------------------

std::string to_string(Stage stage) {
    switch (stage) {
        case Stage::kDecompose: return "decompose";
        case Stage::kCluster: return "cluster";
        case Stage::kDistill: return "distill";
        case Stage::kRoute: return "route";
        case Stage::kJudge: return "judge";
        case Stage::kCalibrate: return "calibrate";
        case Stage::kReward: return "reward";
        case Stage::kAdvantages: return "advantages";
        case Stage::kMetrics: return "metrics";
        case Stage::kRefresh: return "refresh";
    }
    return "unknown";
}

const StageRecord* RunManifest::latest(const std::string& stage) const {
    for (auto it = records.rbegin(); it != records.rend(); ++it) {
        if (it->stage == stage) {
            return &*it;
        }
    }
    return nullptr;
}

std::optional<std::string> RunManifest::produced_hash(const std::string& path) const {
    for (auto it = records.rbegin(); it != records.rend(); ++it) {
        for (const auto& out : it->outputs) {
            if (out.path == path) {
                return out.hash;
            }
        }
    }
    return std::nullopt;
}

json manifest_to_json(const RunManifest& manifest) {
    json records = json::array();
    for (const auto& r : manifest.records) {
        json inputs = json::array();
        for (const auto& f : r.inputs) {
            inputs.push_back({{"path", f.path}, {"hash", f.hash}});
        }
        json outputs = json::array();
        for (const auto& f : r.outputs) {
            outputs.push_back({{"path", f.path}, {"hash", f.hash}});
        }
        records.push_back({{"stage", r.stage},
                           {"cache_key", r.cache_key},
                           {"inputs", inputs},
                           {"outputs", outputs},
                           {"config_hash", r.config_hash},
                           {"stage_version", r.stage_version},
                           {"timestamp", r.timestamp},
                           {"cache_hit", r.cache_hit},
                           {"chat_calls", r.chat_calls},
                           {"embed_calls", r.embed_calls}});
    }
    return json{{"records", records}};
}

RunManifest manifest_from_json(const json& j) {
    RunManifest m;
    for (const auto& rj : j.at("records")) {
        StageRecord r;
        r.stage = rj.at("stage").get<std::string>();
        r.cache_key = rj.at("cache_key").get<std::string>();
        for (const auto& f : rj.at("inputs")) {
            r.inputs.push_back({f.at("path").get<std::string>(), f.at("hash").get<std::string>()});
        }
        for (const auto& f : rj.at("outputs")) {
            r.outputs.push_back({f.at("path").get<std::string>(), f.at("hash").get<std::string>()});
        }
        r.config_hash = rj.at("config_hash").get<std::string>();
        r.stage_version = rj.at("stage_version").get<int>();
        r.timestamp = rj.at("timestamp").get<std::string>();
        r.cache_hit = rj.at("cache_hit").get<bool>();
        r.chat_calls = rj.at("chat_calls").get<std::uint64_t>();
        r.embed_calls = rj.at("embed_calls").get<std::uint64_t>();
        m.records.push_back(std::move(r));
    }
    return m;
}

std::string hash_file(const fs::path& path) {
    return sha256_hex(read_file(path));
}

namespace {

std::string utc_timestamp() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%04d-%02d-%02dT%02d:%02d:%02dZ", tm.tm_year + 1900,
                  tm.tm_mon + 1, tm.tm_mday, tm.tm_hour, tm.tm_min, tm.tm_sec);
    return buf;
}

// Per-trajectory judge scores as stored in scores.jsonl.
struct TrajectoryScores {
    std::string trajectory_id;
    std::vector<SubgoalScore> scores;
};

json scores_to_json(const TrajectoryScores& ts) {
    json items = json::array();
    for (const auto& s : ts.scores) {
        items.push_back({{"triple_index", s.ref.triple_index},
                         {"prototype_id", s.prototype_id},
                         {"raw_score", s.raw_score},
                         {"calibrated", s.calibrated},
                         {"rationale", s.rationale}});
    }
    return json{{"id", ts.trajectory_id}, {"scores", items}};
}

TrajectoryScores scores_from_json(const json& j) {
    TrajectoryScores ts;
    ts.trajectory_id = j.at("id").get<std::string>();
    for (const auto& sj : j.at("scores")) {
        SubgoalScore s;
        s.ref = {ts.trajectory_id, sj.at("triple_index").get<std::size_t>()};
        s.prototype_id = sj.at("prototype_id").get<int>();
        s.raw_score = sj.at("raw_score").get<int>();
        s.calibrated = sj.at("calibrated").get<double>();
        s.rationale = sj.at("rationale").get<std::string>();
        ts.scores.push_back(std::move(s));
    }
    return ts;
}

std::vector<TrajectoryScores> read_scores(const fs::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open scores file " + path.string());
    }
    std::vector<TrajectoryScores> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            out.push_back(scores_from_json(json::parse(line)));
        } catch (const json::exception& e) {
            throw ParseError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
    return out;
}

void write_scores(const std::vector<TrajectoryScores>& all, const fs::path& path) {
    std::string content;
    for (const auto& ts : all) {
        content += scores_to_json(ts).dump();
        content += '\n';
    }
    write_file_atomic(path, content);
}

std::map<std::string, int> binary_outcomes(const std::vector<Trajectory>& corpus) {
    std::map<std::string, int> outcomes;
    for (const auto& t : corpus) {
        if (t.outcome.has_value()) {
            outcomes[t.id] = *t.outcome >= 0.5 ? 1 : 0;
        }
    }
    return outcomes;
}

std::string group_key(const std::string& task_text) {
    return "g" + sha256_hex(task_text).substr(0, 12);
}

double row_stdev(const std::vector<double>& xs, double mean) {
    if (xs.size() < 2) return 0.0;
    double var = 0.0;
    for (double x : xs) {
        var += (x - mean) * (x - mean);
    }
    return std::sqrt(var / double(xs.size()));
}

}  // namespace

// ---------------------------------------------------------------------------
// Pipeline
// ---------------------------------------------------------------------------

Pipeline::Pipeline(fs::path workdir, PipelineConfig config)
    : workdir_(std::move(workdir)), config_(std::move(config)) {
    fs::create_directories(workdir_);

    const fs::path lock_path = workdir_ / ".scribe_lock";
    lock_fd_ = ::open(lock_path.c_str(), O_CREAT | O_RDWR, 0644);
    if (lock_fd_ < 0) {
        throw IoError("cannot open pipeline lock " + lock_path.string());
    }
    if (::flock(lock_fd_, LOCK_EX | LOCK_NB) != 0) {
        ::close(lock_fd_);
        lock_fd_ = -1;
        throw ScribeError("another pipeline run is active in " + workdir_.string());
    }

    config_hash_ = sha256_hex(config_to_json(config_).dump());
    load_manifest();

    if (config_.backend.mock) {
        auto chat = make_demo_chat_backend();
        chat->set_call_budget(config_.backend.max_calls);
        auto embed = std::make_shared<MockEmbedBackend>(std::size_t(config_.backend.embed_dim));
        embed->set_call_budget(config_.backend.max_calls);
        chat_ = chat;
        embed_ = embed;
    } else {
        HttpBackendConfig hc = HttpBackendConfig::from_env();
        if (hc.api_base.empty() || std::getenv("SCRIBE_API_BASE") == nullptr) {
            hc.api_base = config_.backend.api_base;
        }
        if (std::getenv("SCRIBE_JUDGE_MODEL") == nullptr) {
            hc.chat_model = config_.backend.judge_model;
        }
        if (std::getenv("SCRIBE_EMBED_MODEL") == nullptr) {
            hc.embed_model = config_.backend.embed_model;
        }
        hc.max_retries = config_.backend.max_retries;
        hc.backoff_base_ms = config_.backend.backoff_base_ms;
        hc.backoff_factor = config_.backend.backoff_factor;
        hc.max_concurrent = config_.backend.max_concurrent;
        hc.max_calls = config_.backend.max_calls;
        hc.default_temperature = config_.backend.temperature;
        auto session = std::make_shared<HttpSession>(hc);
        chat_ = std::make_shared<HttpChatBackend>(session);
        embed_ = std::make_shared<HttpEmbedBackend>(session);
    }
}

Pipeline::~Pipeline() {
    if (lock_fd_ >= 0) {
        ::flock(lock_fd_, LOCK_UN);
        ::close(lock_fd_);
    }
}

void Pipeline::load_manifest() {
    const fs::path path = workdir_ / "manifest.json";
    if (!fs::exists(path)) {
        return;
    }
    try {
        manifest_ = manifest_from_json(json::parse(read_file(path)));
    } catch (const json::exception& e) {
        throw ParseError("manifest " + path.string() + ": " + e.what());
    }
}

void Pipeline::save_manifest() const {
    json j = manifest_to_json(manifest_);
    j["config"] = config_to_json(config_);
    write_file_atomic(workdir_ / "manifest.json", j.dump(2) + "\n");
}

fs::path Pipeline::stage_output(Stage stage) const {
    switch (stage) {
        case Stage::kDecompose: return workdir_ / "decomposed.jsonl";
        case Stage::kCluster: return workdir_ / "cluster_model.json";
        case Stage::kDistill: return workdir_ / "library.json";
        case Stage::kRoute: return workdir_ / "routed.jsonl";
        case Stage::kJudge: return workdir_ / "scores.jsonl";
        case Stage::kCalibrate: return workdir_ / "calibration.json";
        case Stage::kReward: return workdir_ / "rewards.jsonl";
        case Stage::kAdvantages: return workdir_ / "advantages.jsonl";
        case Stage::kMetrics: return workdir_ / "metrics.json";
        case Stage::kRefresh: return workdir_ / "library.json";
    }
    throw std::invalid_argument("unknown stage");
}

struct Pipeline::StagePlan {
    std::string name;
    int version = 1;
    std::vector<fs::path> inputs;
    std::vector<fs::path> outputs;
    std::function<void()> run;
};

Pipeline::StagePlan Pipeline::plan_stage(Stage stage, const PipelineInputs& inputs) const {
    StagePlan plan;
    plan.name = to_string(stage);

    const fs::path decomposed = stage_output(Stage::kDecompose);
    const fs::path model_path = stage_output(Stage::kCluster);
    const fs::path library_path = stage_output(Stage::kDistill);
    const fs::path routed = stage_output(Stage::kRoute);
    const fs::path scores_path = stage_output(Stage::kJudge);
    const fs::path calibration_path = stage_output(Stage::kCalibrate);
    const fs::path rewards_path = stage_output(Stage::kReward);
    const fs::path advantages_path = stage_output(Stage::kAdvantages);
    const fs::path metrics_path = stage_output(Stage::kMetrics);

    auto* chat = chat_.get();
    auto* embed = embed_.get();
    const PipelineConfig& cfg = config_;

    switch (stage) {
        case Stage::kDecompose:
            plan.inputs = {inputs.corpus};
            plan.outputs = {decomposed};
            plan.run = [=]() {
                auto corpus = read_corpus(inputs.corpus);
                parallel_for(corpus.size(), cfg.backend.max_concurrent, [&](std::size_t i) {
                    auto& traj = corpus[i];
                    if (traj.triples.empty()) {
                        traj.triples = segment_trajectory(traj, *chat);
                    }
                    const auto report = validate_triples(traj, ValidationMode::kNonOverlapOnly);
                    if (!report.ok()) {
                        throw ValidationError("trajectory " + traj.id + ": " +
                                              report.violations.front().message);
                    }
                });
                write_corpus(corpus, decomposed);
            };
            break;

        case Stage::kCluster:
            plan.inputs = {decomposed};
            plan.outputs = {model_path};
            plan.run = [=]() {
                const auto corpus = read_corpus(decomposed);
                auto params = cfg.cluster;
                params.seed = params.seed != 0 ? params.seed : cfg.seed;
                const auto embeddings = embed_skills(corpus, *embed);
                save_cluster_model(cluster_density(embeddings, params), model_path);
            };
            break;

        case Stage::kDistill:
            plan.inputs = {model_path, decomposed};
            plan.outputs = {library_path};
            plan.run = [=]() {
                const auto model = load_cluster_model(model_path);
                const auto corpus = read_corpus(decomposed);
                DistillOptions options;
                options.seed = cfg.seed;
                options.workers = cfg.backend.max_concurrent;
                save_library(build_library(model, corpus, *chat, options), library_path);
            };
            break;

        case Stage::kRoute:
            plan.inputs = {library_path, decomposed};
            plan.outputs = {routed};
            plan.run = [=]() {
                const auto library = load_library(library_path);
                auto corpus = read_corpus(decomposed);
                parallel_for(corpus.size(), cfg.backend.max_concurrent, [&](std::size_t i) {
                    auto& traj = corpus[i];
                    if (traj.triples.empty()) {
                        return;
                    }
                    auto result = route_subgoals(traj.id, traj.triples, library, *embed);
                    traj.triples = std::move(result.triples);
                });
                write_corpus(corpus, routed);
            };
            break;

        case Stage::kJudge:
            plan.inputs = {routed, library_path};
            plan.outputs = {scores_path};
            plan.run = [=]() {
                const auto library = load_library(library_path);
                const auto corpus = read_corpus(routed);

                // Judge calls fan out per subgoal; results are assembled by
                // index so the output is order-stable.
                struct Unit {
                    std::size_t traj;
                    std::size_t triple;
                };
                std::vector<Unit> units;
                for (std::size_t t = 0; t < corpus.size(); ++t) {
                    for (std::size_t i = 0; i < corpus[t].triples.size(); ++i) {
                        const auto& triple = corpus[t].triples[i];
                        if (!triple.prototype_id.has_value()) {
                            throw ValidationError("trajectory " + corpus[t].id + " triple " +
                                                  std::to_string(i) + " has no prototype id");
                        }
                        if (library.prototypes.find(*triple.prototype_id) ==
                            library.prototypes.end()) {
                            throw ValidationError("trajectory " + corpus[t].id +
                                                  " routed to unknown prototype " +
                                                  std::to_string(*triple.prototype_id));
                        }
                        units.push_back({t, i});
                    }
                }
                std::vector<SubgoalScore> results(units.size());
                parallel_for(units.size(), cfg.backend.max_concurrent, [&](std::size_t k) {
                    const auto& traj = corpus[units[k].traj];
                    const auto& triple = traj.triples[units[k].triple];
                    const auto& proto = library.prototypes.at(*triple.prototype_id);
                    results[k] = judge_subgoal(triple, proto, traj, *chat, units[k].triple);
                });

                std::vector<TrajectoryScores> all(corpus.size());
                for (std::size_t t = 0; t < corpus.size(); ++t) {
                    all[t].trajectory_id = corpus[t].id;
                }
                for (std::size_t k = 0; k < units.size(); ++k) {
                    all[units[k].traj].scores.push_back(std::move(results[k]));
                }
                write_scores(all, scores_path);
            };
            break;

        case Stage::kCalibrate:
            plan.inputs = {scores_path, decomposed};
            plan.outputs = {calibration_path};
            plan.run = [=]() {
                const auto all = read_scores(scores_path);
                const auto corpus = read_corpus(decomposed);
                std::vector<SubgoalScore> flat;
                for (const auto& ts : all) {
                    flat.insert(flat.end(), ts.scores.begin(), ts.scores.end());
                }
                save_calibration(
                    build_calibration(flat, binary_outcomes(corpus), cfg.min_support),
                    calibration_path);
            };
            break;

        case Stage::kReward:
            plan.inputs = {scores_path, calibration_path, decomposed};
            plan.outputs = {rewards_path};
            plan.run = [=]() {
                const auto all = read_scores(scores_path);
                const auto table = load_calibration(calibration_path);
                const auto corpus = read_corpus(decomposed);
                std::map<std::string, const TrajectoryScores*> by_id;
                for (const auto& ts : all) {
                    by_id[ts.trajectory_id] = &ts;
                }
                std::string content;
                for (const auto& traj : corpus) {
                    if (!traj.outcome.has_value()) {
                        throw ValidationError("trajectory " + traj.id +
                                              " has no outcome; cannot compose rewards");
                    }
                    auto it = by_id.find(traj.id);
                    const double process =
                        it != by_id.end() && !it->second->scores.empty()
                            ? process_reward(it->second->scores, table)
                            : 0.0;
                    const auto record =
                        compose_reward(traj.id, process, *traj.outcome, cfg.w_p);
                    json j{{"id", record.trajectory_id},
                           {"process_reward", record.process_reward},
                           {"outcome_reward", record.outcome_reward},
                           {"composite", record.composite},
                           {"w_p", record.w_p}};
                    json scores = json::array();
                    if (it != by_id.end()) {
                        for (const auto& s : it->second->scores) {
                            scores.push_back({{"triple_index", s.ref.triple_index},
                                              {"prototype_id", s.prototype_id},
                                              {"raw_score", s.raw_score},
                                              {"calibrated",
                                               table.lookup(s.prototype_id, s.raw_score)},
                                              {"rationale", s.rationale}});
                        }
                    }
                    j["subgoal_scores"] = std::move(scores);
                    content += j.dump();
                    content += '\n';
                }
                write_file_atomic(rewards_path, content);
            };
            break;

        case Stage::kAdvantages:
            plan.inputs = {rewards_path, decomposed};
            plan.outputs = {advantages_path};
            plan.run = [=]() {
                const auto corpus = read_corpus(decomposed);
                std::map<std::string, double> composite;
                {
                    std::ifstream in(rewards_path);
                    if (!in) {
                        throw IoError("cannot open rewards file " + rewards_path.string());
                    }
                    std::string line;
                    while (std::getline(in, line)) {
                        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
                        const json j = json::parse(line);
                        composite[j.at("id").get<std::string>()] =
                            j.at("composite").get<double>();
                    }
                }

                std::vector<std::string> group_order;
                std::map<std::string, AdvantageGroup> groups;
                for (const auto& traj : corpus) {
                    const std::string key = group_key(traj.task_text);
                    auto [it, inserted] = groups.try_emplace(key);
                    if (inserted) {
                        it->second.group_id = key;
                        group_order.push_back(key);
                    }
                    auto reward = composite.find(traj.id);
                    if (reward == composite.end()) {
                        throw ValidationError("no reward record for trajectory " + traj.id);
                    }
                    it->second.trajectory_ids.push_back(traj.id);
                    it->second.rewards.push_back(reward->second);
                }

                std::string content;
                for (const auto& key : group_order) {
                    auto& group = groups[key];
                    if (int(group.rewards.size()) != cfg.group_size) {
                        throw ValidationError(
                            "group " + key + " has " + std::to_string(group.rewards.size()) +
                            " rollouts, expected group_size " + std::to_string(cfg.group_size));
                    }
                    group.advantages = group_advantages(group.rewards, cfg.advantage_eps);
                    group.kl_coeff = cfg.kl_coeff;
                    group.entropy_coeff = cfg.entropy_coeff;
                    content += advantage_group_to_json(group).dump();
                    content += '\n';
                }
                write_file_atomic(advantages_path, content);
            };
            break;

        case Stage::kMetrics: {
            plan.inputs = {};
            if (!inputs.rollouts.empty()) plan.inputs.push_back(inputs.rollouts);
            if (!inputs.plans.empty()) plan.inputs.push_back(inputs.plans);
            plan.outputs = {metrics_path};
            plan.run = [=]() {
                std::vector<SubgoalRollouts> rollouts;
                if (!inputs.rollouts.empty()) {
                    rollouts = read_rollouts(inputs.rollouts, cfg.rollout_count);
                }
                std::vector<PlanRecord> plans;
                if (!inputs.plans.empty()) {
                    plans = read_plans(inputs.plans);
                }
                MetricsOptions options;
                options.tau_hi = cfg.tau_hi;
                options.tau_lo = cfg.tau_lo;
                options.trials = cfg.trials;
                options.rollout_count = cfg.rollout_count;
                options.half_credit_ties = cfg.half_credit_ties;
                const auto report = metrics_report(rollouts, std::move(plans), options);
                write_file_atomic(metrics_path, metrics_report_to_json(report).dump(2) + "\n");
            };
            break;
        }

        case Stage::kRefresh:
            plan.inputs = {model_path, library_path, decomposed};
            plan.outputs = {model_path, library_path};
            plan.version = 1;
            plan.run = [=]() {
                const auto old_model = load_cluster_model(model_path);
                const auto old_library = load_library(library_path);
                const auto corpus = read_corpus(decomposed);
                auto params = cfg.cluster;
                params.seed = params.seed != 0 ? params.seed : cfg.seed;
                const auto embeddings = embed_skills(corpus, *embed);
                const auto new_model = refresh_clusters(old_model, embeddings, params);
                DistillOptions options;
                options.seed = cfg.seed;
                options.workers = cfg.backend.max_concurrent;
                const auto new_library =
                    refresh_library(old_library, new_model, corpus, *chat, options);
                save_cluster_model(new_model, model_path);
                save_library(new_library, library_path);
            };
            break;
    }
    return plan;
}

StageRecord Pipeline::run_stage(Stage stage, const PipelineInputs& inputs) {
    const StagePlan plan = plan_stage(stage, inputs);

    StageRecord record;
    record.stage = plan.name;
    record.stage_version = plan.version;
    record.config_hash = config_hash_;

    std::string key_material = plan.name + "\x1f" + std::to_string(plan.version) + "\x1f" +
                               config_hash_;
    for (const auto& input : plan.inputs) {
        if (!fs::exists(input)) {
            throw ScribeError("stage " + plan.name + ": missing input " + input.string());
        }
        const std::string hash = hash_file(input);
        // An intermediate produced by an earlier stage must still match what
        // that stage recorded.
        if (const auto recorded = manifest_.produced_hash(input.string());
            recorded.has_value() && *recorded != hash) {
            throw HashMismatchError("stage " + plan.name + ": input " + input.string() +
                                    " does not match the hash recorded when it was produced");
        }
        record.inputs.push_back({input.string(), hash});
        key_material += "\x1f" + hash;
    }
    record.cache_key = sha256_hex(key_material);

    // Cache hit: same key and all outputs still present with recorded hashes.
    if (const StageRecord* prev = manifest_.latest(plan.name);
        prev != nullptr && prev->cache_key == record.cache_key) {
        bool outputs_intact = true;
        for (const auto& out : prev->outputs) {
            if (!fs::exists(out.path) || hash_file(out.path) != out.hash) {
                outputs_intact = false;
                break;
            }
        }
        if (outputs_intact) {
            record.outputs = prev->outputs;
            record.cache_hit = true;
            record.timestamp = utc_timestamp();
            manifest_.records.push_back(record);
            save_manifest();
            return record;
        }
    }

    const std::uint64_t chat_before = chat_->call_count();
    const std::uint64_t embed_before = embed_->call_count();
    try {
        plan.run();
    } catch (const std::exception& e) {
        throw ScribeError("stage " + plan.name + ": " + e.what());
    }
    record.chat_calls = chat_->call_count() - chat_before;
    record.embed_calls = embed_->call_count() - embed_before;

    for (const auto& out : plan.outputs) {
        if (!fs::exists(out)) {
            throw ScribeError("stage " + plan.name + ": expected output " + out.string() +
                              " was not produced");
        }
        record.outputs.push_back({out.string(), hash_file(out)});
    }
    record.timestamp = utc_timestamp();
    manifest_.records.push_back(record);
    save_manifest();
    return record;
}

std::vector<StageRecord> Pipeline::run_all(const PipelineInputs& inputs) {
    static const Stage kOrder[] = {Stage::kDecompose, Stage::kCluster,  Stage::kDistill,
                                   Stage::kRoute,     Stage::kJudge,    Stage::kCalibrate,
                                   Stage::kReward,    Stage::kAdvantages, Stage::kMetrics};
    std::vector<StageRecord> records;
    for (Stage stage : kOrder) {
        records.push_back(run_stage(stage, inputs));
    }
    return records;
}

json Pipeline::sweep_wp(const std::vector<double>& values) {
    if (values.empty()) {
        throw std::invalid_argument("sweep_wp: no weight values given");
    }
    const auto scores_path = stage_output(Stage::kJudge);
    const auto calibration_path = stage_output(Stage::kCalibrate);
    const auto decomposed = stage_output(Stage::kDecompose);
    for (const auto& p : {scores_path, calibration_path, decomposed}) {
        if (!fs::exists(p)) {
            throw ScribeError("sweep-wp: missing input " + p.string() +
                              " (run the judge and calibrate stages first)");
        }
    }

    const auto all = read_scores(scores_path);
    const auto table = load_calibration(calibration_path);
    const auto corpus = read_corpus(decomposed);
    std::map<std::string, const TrajectoryScores*> by_id;
    for (const auto& ts : all) {
        by_id[ts.trajectory_id] = &ts;
    }

    struct Item {
        std::string id;
        double process;
        double outcome;
    };
    std::vector<Item> items;
    for (const auto& traj : corpus) {
        if (!traj.outcome.has_value()) {
            throw ValidationError("trajectory " + traj.id + " has no outcome");
        }
        auto it = by_id.find(traj.id);
        const double process = it != by_id.end() && !it->second->scores.empty()
                                   ? process_reward(it->second->scores, table)
                                   : 0.0;
        items.push_back({traj.id, process, *traj.outcome});
    }

    json rows = json::array();
    for (double w_p : values) {
        std::vector<double> composites;
        composites.reserve(items.size());
        for (const auto& item : items) {
            composites.push_back(compose_reward(item.id, item.process, item.outcome, w_p).composite);
        }
        double mean = 0.0;
        for (double c : composites) mean += c;
        mean /= double(composites.size());
        rows.push_back({{"w_p", w_p},
                        {"count", composites.size()},
                        {"mean", mean},
                        {"min", *std::min_element(composites.begin(), composites.end())},
                        {"max", *std::max_element(composites.begin(), composites.end())},
                        {"stdev", row_stdev(composites, mean)},
                        {"composites", composites}});
    }
    json report{{"values", values}, {"rows", rows}};
    write_file_atomic(workdir_ / "sweep_wp.json", report.dump(2) + "\n");
    return report;
}

bool Pipeline::refresh_tick(long step_counter, const PipelineConfig& config) {
    if (step_counter < 0) {
        throw std::invalid_argument("refresh_tick: step counter must be non-negative");
    }
    if (config.refresh_interval <= 0) {
        return false;
    }
    return step_counter > 0 && step_counter % config.refresh_interval == 0;
}

}  // namespace scribe
