#include "scribe/metrics.hpp"

#include <algorithm>
#include <fstream>
#include <map>

#include "scribe/errors.hpp"
#include "scribe/sha256.hpp"
#include "scribe/trajectory.hpp"

namespace scribe {

using nlohmann::json;

std::string to_string(PlanLabel label) {
    switch (label) {
        case PlanLabel::kViable: return "viable";
        case PlanLabel::kNonviable: return "nonviable";
        case PlanLabel::kDiscarded: return "discarded";
        case PlanLabel::kUnlabeled: return "unlabeled";
    }
    return "unlabeled";
}

PlanLabel plan_label_from_string(const std::string& s) {
    if (s == "viable") return PlanLabel::kViable;
    if (s == "nonviable") return PlanLabel::kNonviable;
    if (s == "discarded") return PlanLabel::kDiscarded;
    if (s == "unlabeled") return PlanLabel::kUnlabeled;
    throw ParseError("unknown plan label \"" + s + "\"");
}

double PlanRecord::success_rate() const {
    if (exec_outcomes.empty()) {
        throw std::invalid_argument("PlanRecord::success_rate: no executed trials");
    }
    double successes = 0.0;
    for (bool b : exec_outcomes) {
        successes += b ? 1.0 : 0.0;
    }
    return successes / double(exec_outcomes.size());
}

double mid_succ(const std::vector<SubgoalRollouts>& rollouts) {
    if (rollouts.empty()) {
        throw std::invalid_argument("mid_succ: no rollouts");
    }
    double sum = 0.0;
    for (const auto& r : rollouts) {
        if (r.outcomes.empty()) {
            throw std::invalid_argument("mid_succ: subgoal " + r.subgoal_id + " has no outcomes");
        }
        double successes = 0.0;
        for (bool b : r.outcomes) {
            successes += b ? 1.0 : 0.0;
        }
        sum += successes / double(r.outcomes.size());
    }
    return sum / double(rollouts.size());
}

double mid_unc(const std::vector<SubgoalRollouts>& rollouts) {
    if (rollouts.empty()) {
        throw std::invalid_argument("mid_unc: no rollouts");
    }
    double sum = 0.0;
    for (const auto& r : rollouts) {
        if (r.outcomes.empty()) {
            throw std::invalid_argument("mid_unc: subgoal " + r.subgoal_id + " has no outcomes");
        }
        double successes = 0.0;
        for (bool b : r.outcomes) {
            successes += b ? 1.0 : 0.0;
        }
        const double p = successes / double(r.outcomes.size());
        sum += p * (1.0 - p);
    }
    return sum / double(rollouts.size());
}

std::vector<PlanRecord> label_plans(std::vector<PlanRecord> plans, double tau_hi, double tau_lo,
                                    int trials) {
    if (trials <= 0) {
        throw std::invalid_argument("label_plans: trials must be positive");
    }
    for (auto& plan : plans) {
        if (int(plan.exec_outcomes.size()) != trials) {
            throw std::invalid_argument("label_plans: plan " + plan.plan_id + " has " +
                                        std::to_string(plan.exec_outcomes.size()) +
                                        " executed outcomes, expected " + std::to_string(trials));
        }
        const double s = plan.success_rate();
        if (s >= tau_hi) {
            plan.label = PlanLabel::kViable;
        } else if (s <= tau_lo) {
            plan.label = PlanLabel::kNonviable;
        } else {
            plan.label = PlanLabel::kDiscarded;
        }
    }
    return plans;
}

double plan_preference(const PlanRecord& plan) {
    if (plan.token_logprobs.empty()) {
        throw std::invalid_argument("plan_preference: plan " + plan.plan_id +
                                    " has no token log-probabilities");
    }
    double sum = 0.0;
    for (double lp : plan.token_logprobs) {
        sum += lp;
    }
    return sum / double(plan.token_logprobs.size());
}

namespace {

struct TaskGroup {
    std::vector<const PlanRecord*> viable;
    std::vector<const PlanRecord*> nonviable;
};

std::map<std::string, TaskGroup> group_by_task(const std::vector<PlanRecord>& plans) {
    std::map<std::string, TaskGroup> groups;
    for (const auto& plan : plans) {
        auto& g = groups[plan.task_id];
        if (plan.label == PlanLabel::kViable) {
            g.viable.push_back(&plan);
        } else if (plan.label == PlanLabel::kNonviable) {
            g.nonviable.push_back(&plan);
        }
    }
    return groups;
}

}  // namespace

double high_lvl(const std::vector<PlanRecord>& plans, const HighLvlOptions& options) {
    const PreferenceFn pref =
        options.preference ? options.preference : PreferenceFn(plan_preference);

    double task_sum = 0.0;
    std::size_t eligible = 0;
    for (const auto& [task, group] : group_by_task(plans)) {
        (void)task;
        if (group.viable.empty() || group.nonviable.empty()) {
            continue;
        }
        double pair_sum = 0.0;
        for (const auto* pos : group.viable) {
            const double rp = pref(*pos);
            for (const auto* neg : group.nonviable) {
                const double rn = pref(*neg);
                if (rp > rn) {
                    pair_sum += 1.0;
                } else if (options.half_credit_ties && rp == rn) {
                    pair_sum += 0.5;
                }
            }
        }
        task_sum += pair_sum / (double(group.viable.size()) * double(group.nonviable.size()));
        ++eligible;
    }
    if (eligible == 0) {
        throw std::invalid_argument(
            "high_lvl: no task has both a viable and a nonviable plan");
    }
    return task_sum / double(eligible);
}

std::map<std::string, double> plan_sep_by_task(const std::vector<PlanRecord>& plans) {
    std::map<std::string, double> out;
    for (const auto& [task, group] : group_by_task(plans)) {
        if (group.viable.empty() || group.nonviable.empty()) {
            continue;
        }
        double v = 0.0, n = 0.0;
        for (const auto* p : group.viable) {
            v += p->success_rate();
        }
        for (const auto* p : group.nonviable) {
            n += p->success_rate();
        }
        out[task] = v / double(group.viable.size()) - n / double(group.nonviable.size());
    }
    return out;
}

double plan_sep(const std::vector<PlanRecord>& plans) {
    const auto by_task = plan_sep_by_task(plans);
    if (by_task.empty()) {
        throw std::invalid_argument(
            "plan_sep: no task has both a viable and a nonviable plan");
    }
    double sum = 0.0;
    for (const auto& [task, sep] : by_task) {
        (void)task;
        sum += sep;
    }
    return sum / double(by_task.size());
}

std::string plan_set_hash(const std::vector<PlanRecord>& plans) {
    std::vector<std::string> keys;
    keys.reserve(plans.size());
    for (const auto& plan : plans) {
        std::string k = plan.task_id + "\x1f" + plan.plan_id;
        for (const auto& s : plan.subgoal_sequence) {
            k += "\x1e" + s;
        }
        keys.push_back(std::move(k));
    }
    std::sort(keys.begin(), keys.end());
    std::string all;
    for (const auto& k : keys) {
        all += k;
        all += '\x1d';
    }
    return sha256_hex(all);
}

MetricsReport metrics_report(const std::vector<SubgoalRollouts>& rollouts,
                             std::vector<PlanRecord> plans, const MetricsOptions& options) {
    MetricsReport report;
    report.counts.subgoals = rollouts.size();

    if (!rollouts.empty()) {
        if (options.rollout_count > 0) {
            for (const auto& r : rollouts) {
                if (int(r.outcomes.size()) != options.rollout_count) {
                    throw std::invalid_argument("metrics_report: subgoal " + r.subgoal_id +
                                                " has " + std::to_string(r.outcomes.size()) +
                                                " rollouts, expected " +
                                                std::to_string(options.rollout_count));
                }
            }
        }
        report.mid_succ = mid_succ(rollouts);
        report.mid_unc = mid_unc(rollouts);
    }

    if (!plans.empty()) {
        report.plan_set_hash = plan_set_hash(plans);
        plans = label_plans(std::move(plans), options.tau_hi, options.tau_lo, options.trials);
        std::map<std::string, bool> tasks;
        for (const auto& plan : plans) {
            tasks[plan.task_id] = true;
            switch (plan.label) {
                case PlanLabel::kViable: ++report.counts.viable_plans; break;
                case PlanLabel::kNonviable: ++report.counts.nonviable_plans; break;
                case PlanLabel::kDiscarded: ++report.counts.discarded_plans; break;
                case PlanLabel::kUnlabeled: break;
            }
        }
        report.counts.tasks = tasks.size();
        report.counts.eligible_tasks = plan_sep_by_task(plans).size();
        report.counts.skipped_tasks = report.counts.tasks - report.counts.eligible_tasks;
        if (report.counts.eligible_tasks > 0) {
            HighLvlOptions hl;
            hl.half_credit_ties = options.half_credit_ties;
            report.high_lvl = high_lvl(plans, hl);
            report.plan_sep = plan_sep(plans);
        }
    }
    return report;
}

json metrics_report_to_json(const MetricsReport& report) {
    json j;
    j["mid_succ"] = report.mid_succ.has_value() ? json(*report.mid_succ) : json(nullptr);
    j["mid_unc"] = report.mid_unc.has_value() ? json(*report.mid_unc) : json(nullptr);
    j["high_lvl"] = report.high_lvl.has_value() ? json(*report.high_lvl) : json(nullptr);
    j["plan_sep"] = report.plan_sep.has_value() ? json(*report.plan_sep) : json(nullptr);
    j["counts"] = {{"subgoals", report.counts.subgoals},
                   {"tasks", report.counts.tasks},
                   {"eligible_tasks", report.counts.eligible_tasks},
                   {"skipped_tasks", report.counts.skipped_tasks},
                   {"viable_plans", report.counts.viable_plans},
                   {"nonviable_plans", report.counts.nonviable_plans},
                   {"discarded_plans", report.counts.discarded_plans}};
    j["plan_set_hash"] = report.plan_set_hash;
    return j;
}

std::vector<SubgoalRollouts> read_rollouts(const std::filesystem::path& path, int expected_count) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open rollouts file " + path.string());
    }
    std::vector<SubgoalRollouts> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) {
            continue;
        }
        try {
            const json j = json::parse(line);
            SubgoalRollouts r;
            r.subgoal_id = j.at("subgoal_id").get<std::string>();
            r.outcomes = j.at("outcomes").get<std::vector<bool>>();
            if (expected_count > 0 && int(r.outcomes.size()) != expected_count) {
                throw ParseError("subgoal " + r.subgoal_id + " has " +
                                 std::to_string(r.outcomes.size()) + " outcomes, expected " +
                                 std::to_string(expected_count));
            }
            out.push_back(std::move(r));
        } catch (const json::exception& e) {
            throw ParseError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
        } catch (const ParseError& e) {
            throw ParseError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
    return out;
}

std::vector<PlanRecord> read_plans(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open plans file " + path.string());
    }
    std::vector<PlanRecord> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) {
            continue;
        }
        try {
            const json j = json::parse(line);
            PlanRecord p;
            p.plan_id = j.at("plan_id").get<std::string>();
            p.task_id = j.at("task_id").get<std::string>();
            p.subgoal_sequence = j.at("subgoal_sequence").get<std::vector<std::string>>();
            p.token_logprobs = j.at("token_logprobs").get<std::vector<double>>();
            p.exec_outcomes = j.at("exec_outcomes").get<std::vector<bool>>();
            for (double lp : p.token_logprobs) {
                if (lp > 0.0) {
                    throw ParseError("plan " + p.plan_id + " has a positive token log-probability");
                }
            }
            out.push_back(std::move(p));
        } catch (const json::exception& e) {
            throw ParseError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
        } catch (const ParseError& e) {
            throw ParseError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
    return out;
}

}  // namespace scribe
