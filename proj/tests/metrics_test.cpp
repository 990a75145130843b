#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "scribe/errors.hpp"
#include "scribe/metrics.hpp"
#include "scribe/rng.hpp"

using namespace scribe;
namespace fs = std::filesystem;

namespace {

SubgoalRollouts rollouts_with(const std::string& id, int successes, int total) {
    SubgoalRollouts r;
    r.subgoal_id = id;
    for (int i = 0; i < total; ++i) {
        r.outcomes.push_back(i < successes);
    }
    return r;
}

PlanRecord make_plan(const std::string& task, const std::string& id,
                     std::vector<double> logprobs, int successes, int trials,
                     PlanLabel label = PlanLabel::kUnlabeled) {
    PlanRecord p;
    p.plan_id = id;
    p.task_id = task;
    p.subgoal_sequence = {"step one for " + id, "step two for " + id};
    p.token_logprobs = std::move(logprobs);
    for (int i = 0; i < trials; ++i) {
        p.exec_outcomes.push_back(i < successes);
    }
    p.label = label;
    return p;
}

// Independent pairwise reference for high_lvl: collects all (viable,
// nonviable) pairs per task and averages indicator values.
double brute_force_high_lvl(const std::vector<PlanRecord>& plans, bool half_credit) {
    std::map<std::string, std::pair<std::vector<double>, std::vector<double>>> tasks;
    for (const auto& p : plans) {
        double pref = 0.0;
        double sum = 0.0;
        for (double lp : p.token_logprobs) sum += lp;
        pref = sum / double(p.token_logprobs.size());
        if (p.label == PlanLabel::kViable) {
            tasks[p.task_id].first.push_back(pref);
        } else if (p.label == PlanLabel::kNonviable) {
            tasks[p.task_id].second.push_back(pref);
        }
    }
    double total = 0.0;
    int eligible = 0;
    for (const auto& [task, sides] : tasks) {
        (void)task;
        if (sides.first.empty() || sides.second.empty()) continue;
        double wins = 0.0;
        for (double vp : sides.first) {
            for (double np : sides.second) {
                if (vp > np) wins += 1.0;
                else if (half_credit && vp == np) wins += 0.5;
            }
        }
        total += wins / double(sides.first.size() * sides.second.size());
        ++eligible;
    }
    return total / double(eligible);
}

}  // namespace

TEST_CASE("mid_succ worked examples") {
    CHECK(mid_succ({rollouts_with("u", 64, 64)}) == 1.0);
    CHECK(mid_succ({rollouts_with("u", 48, 64)}) == doctest::Approx(0.75).epsilon(1e-15));
    // Macro averaging ignores per-subgoal R.
    CHECK(mid_succ({rollouts_with("a", 10, 10), rollouts_with("b", 16, 32)}) ==
          doctest::Approx(0.75).epsilon(1e-15));
    CHECK_THROWS_AS(mid_succ({}), std::invalid_argument);
}

TEST_CASE("mid_unc equals p(1-p) macro-averaged") {
    CHECK(mid_unc({rollouts_with("u", 64, 64)}) == 0.0);
    CHECK(mid_unc({rollouts_with("u", 32, 64)}) == doctest::Approx(0.25).epsilon(1e-15));
    CHECK(mid_unc({rollouts_with("u", 48, 64)}) == doctest::Approx(0.1875).epsilon(1e-15));
}

TEST_CASE("mid_unc equals the direct composition for every k/64 exactly") {
    for (int k = 0; k <= 64; ++k) {
        const auto fixture = std::vector<SubgoalRollouts>{rollouts_with("u", k, 64)};
        const double p = double(k) / 64.0;
        CHECK(mid_unc(fixture) == p * (1.0 - p));
        CHECK(mid_unc(fixture) <= 0.25);
    }
}

TEST_CASE("label_plans applies the viability thresholds") {
    auto plans = label_plans({make_plan("x", "a", {-1}, 3, 5), make_plan("x", "b", {-1}, 0, 5),
                              make_plan("x", "c", {-1}, 1, 5)},
                             0.5, 0.0, 5);
    CHECK(plans[0].label == PlanLabel::kViable);     // 0.6 >= 0.5
    CHECK(plans[1].label == PlanLabel::kNonviable);  // 0.0 <= 0.0
    CHECK(plans[2].label == PlanLabel::kDiscarded);  // 0.2 in between
}

TEST_CASE("label_plans validates the trial count") {
    CHECK_THROWS_AS(label_plans({make_plan("x", "a", {-1}, 2, 4)}, 0.5, 0.0, 5),
                    std::invalid_argument);
    CHECK_THROWS_AS(label_plans({make_plan("x", "a", {-1}, 2, 5)}, 0.5, 0.0, 0),
                    std::invalid_argument);
}

TEST_CASE("raising tau_hi never converts a plan to viable") {
    std::mt19937_64 rng(11);
    for (int round = 0; round < 200; ++round) {
        const int successes = int(rng() % 6);
        const double tau_a = uniform01(rng);
        const double tau_b = tau_a + uniform01(rng) * (1.0 - tau_a);
        const auto a =
            label_plans({make_plan("x", "p", {-1}, successes, 5)}, tau_a, 0.0, 5)[0].label;
        const auto b =
            label_plans({make_plan("x", "p", {-1}, successes, 5)}, tau_b, 0.0, 5)[0].label;
        if (b == PlanLabel::kViable) {
            CHECK(a == PlanLabel::kViable);
        }
    }
}

TEST_CASE("plan preference is the mean token log-probability") {
    CHECK(plan_preference(make_plan("x", "a", {-1, -1, -1}, 1, 1)) == -1.0);
    CHECK(plan_preference(make_plan("x", "a", {-0.5, -1.5}, 1, 1)) == -1.0);
    CHECK(plan_preference(make_plan("x", "a", {-0.1, -0.2, -0.3, -0.4}, 1, 1)) ==
          doctest::Approx(-0.25).epsilon(1e-15));
    CHECK_THROWS_AS(plan_preference(make_plan("x", "a", {}, 1, 1)), std::invalid_argument);
}

TEST_CASE("plan preference is permutation invariant") {
    std::vector<double> lps{-0.7, -0.1, -1.9, -0.4};
    const double base = plan_preference(make_plan("x", "a", lps, 1, 1));
    std::sort(lps.begin(), lps.end());
    do {
        CHECK(plan_preference(make_plan("x", "a", lps, 1, 1)) == doctest::Approx(base).epsilon(1e-15));
    } while (std::next_permutation(lps.begin(), lps.end()));
}

TEST_CASE("high_lvl worked examples") {
    // Single dominant pair.
    CHECK(high_lvl({make_plan("x", "v", {-0.5}, 5, 5, PlanLabel::kViable),
                    make_plan("x", "n", {-1.0}, 0, 5, PlanLabel::kNonviable)}) == 1.0);
    // Tie scores 0 under the strict indicator.
    CHECK(high_lvl({make_plan("x", "v", {-0.5}, 5, 5, PlanLabel::kViable),
                    make_plan("x", "n", {-0.5}, 0, 5, PlanLabel::kNonviable)}) == 0.0);
    // Four-pair worked example: 3 of 4 comparisons favor the viable side.
    const auto plans = std::vector<PlanRecord>{
        make_plan("x", "v1", {-0.5}, 5, 5, PlanLabel::kViable),
        make_plan("x", "v2", {-1.0}, 5, 5, PlanLabel::kViable),
        make_plan("x", "n1", {-0.8}, 0, 5, PlanLabel::kNonviable),
        make_plan("x", "n2", {-2.0}, 0, 5, PlanLabel::kNonviable),
    };
    CHECK(high_lvl(plans) == doctest::Approx(0.75).epsilon(1e-12));
    CHECK(high_lvl(plans) == doctest::Approx(brute_force_high_lvl(plans, false)).epsilon(1e-15));
}

TEST_CASE("high_lvl optional half-credit tie mode") {
    const auto plans = std::vector<PlanRecord>{
        make_plan("x", "v", {-0.5}, 5, 5, PlanLabel::kViable),
        make_plan("x", "n", {-0.5}, 0, 5, PlanLabel::kNonviable),
    };
    HighLvlOptions half;
    half.half_credit_ties = true;
    CHECK(high_lvl(plans, half) == 0.5);
}

TEST_CASE("high_lvl needs at least one eligible task and skips one-sided tasks") {
    CHECK_THROWS_AS(high_lvl({make_plan("x", "v", {-0.5}, 5, 5, PlanLabel::kViable)}),
                    std::invalid_argument);
    // Task y has no nonviable plan: skipped; task x decides the value.
    CHECK(high_lvl({make_plan("x", "v", {-0.5}, 5, 5, PlanLabel::kViable),
                    make_plan("x", "n", {-1.5}, 0, 5, PlanLabel::kNonviable),
                    make_plan("y", "v2", {-0.2}, 5, 5, PlanLabel::kViable)}) == 1.0);
}

TEST_CASE("high_lvl matches the brute-force reference on random plan sets") {
    std::mt19937_64 rng(93);
    for (int round = 0; round < 30; ++round) {
        std::vector<PlanRecord> plans;
        const int tasks = 1 + int(rng() % 4);
        bool any_eligible = false;
        for (int t = 0; t < tasks; ++t) {
            const int count = 2 + int(rng() % 5);
            bool has_v = false, has_n = false;
            for (int p = 0; p < count; ++p) {
                std::vector<double> lps(1 + rng() % 6);
                for (auto& lp : lps) {
                    lp = -0.01 * double(1 + rng() % 300);
                }
                const bool viable = rng() % 2 == 0;
                has_v |= viable;
                has_n |= !viable;
                plans.push_back(make_plan("task" + std::to_string(t),
                                          "p" + std::to_string(t) + "_" + std::to_string(p), lps,
                                          viable ? 5 : 0, 5,
                                          viable ? PlanLabel::kViable : PlanLabel::kNonviable));
            }
            any_eligible |= has_v && has_n;
        }
        if (!any_eligible) continue;
        CHECK(high_lvl(plans) ==
              doctest::Approx(brute_force_high_lvl(plans, false)).epsilon(1e-12));
    }
}

TEST_CASE("high_lvl is invariant under strictly increasing preference transforms") {
    std::vector<PlanRecord> plans{
        make_plan("x", "v1", {-0.5, -0.25}, 5, 5, PlanLabel::kViable),
        make_plan("x", "n1", {-0.8}, 0, 5, PlanLabel::kNonviable),
        make_plan("x", "n2", {-2.0, -1.0, -0.5}, 0, 5, PlanLabel::kNonviable),
        make_plan("y", "v2", {-0.1}, 5, 5, PlanLabel::kViable),
        make_plan("y", "n3", {-0.1}, 0, 5, PlanLabel::kNonviable),
    };
    const double base = high_lvl(plans);
    for (int variant = 0; variant < 3; ++variant) {
        HighLvlOptions opts;
        opts.preference = [variant](const PlanRecord& p) {
            const double r = plan_preference(p);
            switch (variant) {
                case 0: return std::exp(r);
                case 1: return 3.0 * r + 7.0;
                default: return r * r * r;
            }
        };
        CHECK(high_lvl(plans, opts) == base);
    }
}

TEST_CASE("plan_sep worked examples") {
    // Viable rates {0.8, 0.6}, nonviable {0.0, 0.2}: separation 0.6.
    const auto plans = std::vector<PlanRecord>{
        make_plan("x", "v1", {-1}, 4, 5, PlanLabel::kViable),
        make_plan("x", "v2", {-1}, 3, 5, PlanLabel::kViable),
        make_plan("x", "n1", {-1}, 0, 5, PlanLabel::kNonviable),
        make_plan("x", "n2", {-1}, 1, 5, PlanLabel::kNonviable),
    };
    CHECK(plan_sep(plans) == doctest::Approx(0.6).epsilon(1e-12));

    // Maximal separation.
    CHECK(plan_sep({make_plan("x", "v", {-1}, 5, 5, PlanLabel::kViable),
                    make_plan("x", "n", {-1}, 0, 5, PlanLabel::kNonviable)}) == 1.0);
    CHECK_THROWS_AS(plan_sep({make_plan("x", "v", {-1}, 5, 5, PlanLabel::kViable)}),
                    std::invalid_argument);
}

TEST_CASE("with default thresholds every per-task separation is at least 0.5") {
    std::mt19937_64 rng(400);
    for (int round = 0; round < 50; ++round) {
        std::vector<PlanRecord> plans;
        for (int t = 0; t < 3; ++t) {
            for (int p = 0; p < 6; ++p) {
                plans.push_back(make_plan("task" + std::to_string(t),
                                          "p" + std::to_string(t) + "_" + std::to_string(p),
                                          {-1.0}, int(rng() % 6), 5));
            }
        }
        const auto labeled = label_plans(plans, 0.5, 0.0, 5);
        for (const auto& [task, sep] : plan_sep_by_task(labeled)) {
            (void)task;
            CHECK(sep >= 0.5);
        }
    }
}

TEST_CASE("metrics_report composes the constituent examples") {
    const std::vector<SubgoalRollouts> rollouts{rollouts_with("a", 48, 64),
                                                rollouts_with("b", 64, 64)};
    const std::vector<PlanRecord> plans{
        make_plan("x", "v1", {-0.5}, 4, 5), make_plan("x", "v2", {-1.0}, 3, 5),
        make_plan("x", "n1", {-0.8}, 0, 5), make_plan("x", "n2", {-2.0}, 0, 5),
        make_plan("y", "lonely", {-0.3}, 5, 5)};  // no nonviable side: skipped
    MetricsOptions options;
    const auto report = metrics_report(rollouts, plans, options);
    REQUIRE(report.mid_succ.has_value());
    CHECK(*report.mid_succ == doctest::Approx((0.75 + 1.0) / 2.0).epsilon(1e-15));
    REQUIRE(report.mid_unc.has_value());
    CHECK(*report.mid_unc == doctest::Approx(0.1875 / 2.0).epsilon(1e-15));
    REQUIRE(report.high_lvl.has_value());
    CHECK(*report.high_lvl == doctest::Approx(0.75).epsilon(1e-12));
    REQUIRE(report.plan_sep.has_value());
    CHECK(*report.plan_sep == doctest::Approx(0.7).epsilon(1e-12));
    CHECK(report.counts.subgoals == 2);
    CHECK(report.counts.tasks == 2);
    CHECK(report.counts.eligible_tasks == 1);
    CHECK(report.counts.skipped_tasks == 1);
    CHECK(report.counts.viable_plans == 3);
    CHECK(report.counts.nonviable_plans == 2);
    CHECK(!report.plan_set_hash.empty());
}

TEST_CASE("metrics_report marks plan metrics unavailable without plans") {
    const auto report = metrics_report({rollouts_with("a", 32, 64)}, {}, {});
    CHECK(report.mid_succ.has_value());
    CHECK(report.mid_unc.has_value());
    CHECK(!report.high_lvl.has_value());
    CHECK(!report.plan_sep.has_value());
    const auto j = metrics_report_to_json(report);
    CHECK(j.at("high_lvl").is_null());
    CHECK(j.at("mid_succ").get<double>() == doctest::Approx(0.5));
}

TEST_CASE("metrics_report validates the rollout count R") {
    MetricsOptions options;
    options.rollout_count = 64;
    CHECK_THROWS_AS(metrics_report({rollouts_with("a", 3, 5)}, {}, options),
                    std::invalid_argument);
}

TEST_CASE("plan set hash is order-independent but content-sensitive") {
    auto a = make_plan("x", "p1", {-1}, 3, 5);
    auto b = make_plan("x", "p2", {-1}, 2, 5);
    const auto h1 = plan_set_hash({a, b});
    const auto h2 = plan_set_hash({b, a});
    CHECK(h1 == h2);
    // Execution outcomes vary across checkpoints without changing the set.
    auto a_rerun = a;
    a_rerun.exec_outcomes = {false, false, false, false, false};
    CHECK(plan_set_hash({a_rerun, b}) == h1);
    auto c = a;
    c.subgoal_sequence.push_back("an extra step");
    CHECK(plan_set_hash({c, b}) != h1);
}

TEST_CASE("rollout and plan readers report malformed lines and enforce bounds") {
    const auto dir = fs::temp_directory_path() / "scribe_metrics_test";
    fs::create_directories(dir);

    const auto rollouts_path = dir / "rollouts.jsonl";
    {
        std::ofstream out(rollouts_path);
        out << R"({"subgoal_id": "a", "outcomes": [true, false]})" << "\n";
        out << "{bad json\n";
    }
    CHECK_THROWS_WITH_AS(read_rollouts(rollouts_path), doctest::Contains(":2:"), ParseError);

    const auto plans_path = dir / "plans.jsonl";
    {
        std::ofstream out(plans_path);
        out << R"({"plan_id": "p", "task_id": "t", "subgoal_sequence": ["s"],)"
            << R"( "token_logprobs": [0.5], "exec_outcomes": [true]})" << "\n";
    }
    CHECK_THROWS_WITH_AS(read_plans(plans_path), doctest::Contains("positive token log-probability"),
                         ParseError);

    {
        std::ofstream out(rollouts_path);
        out << R"({"subgoal_id": "a", "outcomes": [true, false]})" << "\n";
    }
    CHECK_THROWS_AS(read_rollouts(rollouts_path, 64), ParseError);
    CHECK(read_rollouts(rollouts_path, 2).size() == 1);
}
