#pragma once

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "scribe/backend.hpp"
#include "scribe/prototype.hpp"
#include "scribe/trajectory.hpp"

namespace scribe {

struct SubgoalScore {
    TripleRef ref;
    int prototype_id = 0;
    int raw_score = 0;       // in {0,1,2,3}
    double calibrated = 0.0;  // in [0,3]
    std::string rationale;

    bool operator==(const SubgoalScore&) const = default;
};

// Per-prototype, order-preserving map from raw judge score to calibrated
// reward, fit from empirical task-success rates by adjacent pooling.
class CalibrationTable {
public:
    struct Entry {
        double calibrated = 0.0;
        int support = 0;
        double success_rate = 0.0;

        bool operator==(const Entry&) const = default;
    };

    void set(int prototype_id, int raw_score, Entry entry);
    const Entry* find(int prototype_id, int raw_score) const;

    // Calibrated value, falling back to the raw score when no entry exists.
    double lookup(int prototype_id, int raw_score) const;

    // True when calibrated values are non-decreasing in raw score for every
    // prototype.
    bool monotone() const;

    int min_support() const { return min_support_; }
    void set_min_support(int v) { min_support_ = v; }

    const std::map<std::pair<int, int>, Entry>& entries() const { return entries_; }

    bool operator==(const CalibrationTable&) const = default;

private:
    std::map<std::pair<int, int>, Entry> entries_;
    int min_support_ = 0;
};

nlohmann::json calibration_to_json(const CalibrationTable& table);
CalibrationTable calibration_from_json(const nlohmann::json& j);
void save_calibration(const CalibrationTable& table, const std::filesystem::path& path);
CalibrationTable load_calibration(const std::filesystem::path& path);

// Judges one routed subgoal against its prototype rubric. Out-of-range or
// unparseable scores get one reprompt, then fail.
SubgoalScore judge_subgoal(const SubgoalTriple& triple, const SkillPrototype& prototype,
                           const Trajectory& context, ChatBackend& backend,
                           std::size_t triple_index = 0, int max_reprompts = 1);

// Parses "score: <n>" (or the first bare integer) plus an optional
// "rationale:" tail. Returns nullopt when no integer is present.
struct JudgeParse {
    int score = 0;
    std::string rationale;
};
std::optional<JudgeParse> parse_judge_response(const std::string& response);

// Empirical success rate per (prototype, raw score); adjacent score levels
// whose success rates fail to increase are pooled to a support-weighted mean
// of their raw values. Cells with support below min_support keep raw.
CalibrationTable build_calibration(const std::vector<SubgoalScore>& scores,
                                   const std::map<std::string, int>& outcomes, int min_support);

// Weighted average of calibrated scores, normalized by /3 into [0,1].
double process_reward(const std::vector<SubgoalScore>& scores, const CalibrationTable& table,
                      const std::vector<double>& weights = {});

struct RewardRecord {
    std::string trajectory_id;
    double process_reward = 0.0;
    double outcome_reward = 0.0;
    double composite = 0.0;
    double w_p = 0.0;

    bool operator==(const RewardRecord&) const = default;
};

RewardRecord compose_reward(const std::string& trajectory_id, double process, double outcome,
                            double w_p);

// Group-relative advantages: (r - mean) / (std + eps) with population std;
// identical rewards yield all zeros.
std::vector<double> group_advantages(const std::vector<double>& rewards, double eps = 1e-8);

struct AdvantageGroup {
    std::string group_id;
    std::vector<std::string> trajectory_ids;
    std::vector<double> rewards;
    std::vector<double> advantages;
    double kl_coeff = 0.0;
    double entropy_coeff = 0.0;
};

nlohmann::json advantage_group_to_json(const AdvantageGroup& group);

// --- judge-consistency monitoring ---

struct Anchor {
    std::string subgoal;
    int prototype_id = 0;
};

struct AnchorHistoryEntry {
    std::string checkpoint;
    std::vector<int> scores;
    int modal = 0;
};

struct AnchorSet {
    std::vector<Anchor> anchors;  // immutable after creation
    std::vector<std::vector<AnchorHistoryEntry>> history;  // per anchor
};

struct DriftEntry {
    std::size_t anchor_index = 0;
    std::vector<int> scores;
    int modal = 0;
    bool drifting = false;
    std::string reason;
};

struct DriftReport {
    std::string checkpoint;
    std::vector<DriftEntry> entries;

    int drift_count() const;
};

// Judges each anchor `evals_per_anchor` times and appends to the history. An
// anchor drifts when its batch scores disagree or its modal score departs
// from the first recorded checkpoint.
DriftReport check_anchors(AnchorSet& anchors, const PrototypeLibrary& library,
                          ChatBackend& backend, const std::string& checkpoint_label,
                          int evals_per_anchor = 5);

// --- prompt-variant agreement ---

using VariantScorer = std::function<std::vector<int>(const std::vector<SubgoalTriple>&)>;

struct VariantPairAgreement {
    std::string variant_a;
    std::string variant_b;
    double count_agreement = 0.0;  // min/max of subgoal counts
    double span_f1 = 0.0;          // overlap F1 under greedy max-overlap matching
    std::optional<double> kendall_tau;
};

struct AgreementReport {
    std::vector<VariantPairAgreement> pairs;
    double mean_count_agreement = 0.0;
    double mean_span_f1 = 0.0;
    std::optional<double> mean_kendall_tau;
};

// Segments the trajectory under every variant and reports pairwise
// agreement. When a scorer is supplied, matched subgoal pairs additionally
// get a Kendall tau over their score sequences.
AgreementReport prompt_variant_agreement(const Trajectory& trajectory,
                                         const std::vector<std::string>& variant_ids,
                                         ChatBackend& backend, const VariantScorer& scorer = {});

// Exposed for the agreement fixtures: overlap F1 between two span lists
// under greedy maximal-overlap matching.
double span_overlap_f1(const std::vector<StepSpan>& a, const std::vector<StepSpan>& b);

double kendall_tau(const std::vector<int>& a, const std::vector<int>& b);

}  // namespace scribe
