#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

namespace scribe {

struct SubgoalRollouts {
    std::string subgoal_id;
    std::vector<bool> outcomes;
};

enum class PlanLabel { kViable, kNonviable, kDiscarded, kUnlabeled };

std::string to_string(PlanLabel label);
PlanLabel plan_label_from_string(const std::string& s);

struct PlanRecord {
    std::string plan_id;
    std::string task_id;
    std::vector<std::string> subgoal_sequence;
    std::vector<double> token_logprobs;  // natural log, all <= 0
    std::vector<bool> exec_outcomes;
    PlanLabel label = PlanLabel::kUnlabeled;

    // Empirical success rate over the executed trials.
    double success_rate() const;
};

// Macro-averaged per-subgoal success fraction.
double mid_succ(const std::vector<SubgoalRollouts>& rollouts);

// Macro-average of p(1-p) per subgoal; maximum 0.25 at p = 0.5.
double mid_unc(const std::vector<SubgoalRollouts>& rollouts);

// Viable when success rate >= tau_hi, nonviable when <= tau_lo, discarded in
// between. Every plan must carry exactly `trials` executed outcomes.
std::vector<PlanRecord> label_plans(std::vector<PlanRecord> plans, double tau_hi, double tau_lo,
                                    int trials);

// Length-normalized log-probability: mean of token_logprobs.
double plan_preference(const PlanRecord& plan);

using PreferenceFn = std::function<double(const PlanRecord&)>;

struct HighLvlOptions {
    bool half_credit_ties = false;  // AUC convention: ties score 0.5 instead of 0
    PreferenceFn preference;        // defaults to plan_preference
};

// Per task, the fraction of (viable, nonviable) pairs whose viable plan has
// strictly greater preference; mean over tasks that have both labels.
double high_lvl(const std::vector<PlanRecord>& plans, const HighLvlOptions& options = {});

// Gap between mean success rates of viable and nonviable plans, per task,
// averaged over eligible tasks.
double plan_sep(const std::vector<PlanRecord>& plans);
std::map<std::string, double> plan_sep_by_task(const std::vector<PlanRecord>& plans);

struct MetricsCounts {
    std::size_t subgoals = 0;
    std::size_t tasks = 0;
    std::size_t eligible_tasks = 0;
    std::size_t skipped_tasks = 0;
    std::size_t viable_plans = 0;
    std::size_t nonviable_plans = 0;
    std::size_t discarded_plans = 0;
};

struct MetricsReport {
    std::optional<double> mid_succ;
    std::optional<double> mid_unc;
    std::optional<double> high_lvl;
    std::optional<double> plan_sep;
    MetricsCounts counts;
    std::string plan_set_hash;
};

struct MetricsOptions {
    double tau_hi = 0.5;
    double tau_lo = 0.0;
    int trials = 5;
    int rollout_count = 64;  // expected R; 0 disables the length check
    bool half_credit_ties = false;
};

// Bundles the four metrics; mid metrics require rollouts, plan metrics are
// marked unavailable when no task has both viable and nonviable plans.
MetricsReport metrics_report(const std::vector<SubgoalRollouts>& rollouts,
                             std::vector<PlanRecord> plans, const MetricsOptions& options = {});

nlohmann::json metrics_report_to_json(const MetricsReport& report);

// Fingerprint of the candidate plan set (ids, tasks and subgoal sequences
// only), stable across checkpoints so comparisons can refuse mismatched sets.
std::string plan_set_hash(const std::vector<PlanRecord>& plans);

// JSONL ingestion. Rollout lines: {"subgoal_id", "outcomes"}; plan lines:
// {"plan_id", "task_id", "subgoal_sequence", "token_logprobs",
// "exec_outcomes"}. Both report malformed lines by number.
std::vector<SubgoalRollouts> read_rollouts(const std::filesystem::path& path,
                                           int expected_count = 0);
std::vector<PlanRecord> read_plans(const std::filesystem::path& path);

}  // namespace scribe
