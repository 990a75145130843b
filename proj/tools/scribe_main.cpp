// scribe: batch CLI for the skill-conditioned reward pipeline.
//
// Workdir verbs (cached, manifest-tracked): decompose, cluster, distill,
// judge, calibrate, reward, advantages, refresh, sweep-wp, run-all.
// Direct file verbs: route, router-eval, metrics, proto-card.

#include <cstdio>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "scribe/errors.hpp"
#include "scribe/metrics.hpp"
#include "scribe/mock_demo.hpp"
#include "scribe/pipeline.hpp"
#include "scribe/prototype.hpp"
#include "scribe/reward.hpp"
#include "scribe/router.hpp"
#include "scribe/trajectory.hpp"

namespace {

struct GlobalOptions {
    std::string config_path;
    std::string workdir = "scribe_work";
    std::uint64_t seed = 0;
    bool seed_set = false;
    bool mock_backends = false;
};

scribe::PipelineConfig resolve_config(const GlobalOptions& opts) {
    scribe::PipelineConfig config;
    if (!opts.config_path.empty()) {
        config = scribe::load_config(opts.config_path);
    }
    if (opts.seed_set) {
        config.seed = opts.seed;
    }
    if (opts.mock_backends) {
        config.backend.mock = true;
    }
    return config;
}

void print_stage_record(const scribe::StageRecord& record) {
    std::printf("[%s] %s%s (chat calls: %llu, embed calls: %llu)\n", record.stage.c_str(),
                record.cache_hit ? "cache hit" : "completed",
                record.cache_hit ? "" : (", outputs: " + std::to_string(record.outputs.size())).c_str(),
                static_cast<unsigned long long>(record.chat_calls),
                static_cast<unsigned long long>(record.embed_calls));
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"SCRIBE skill-conditioned reward pipeline"};
    app.require_subcommand(1);

    GlobalOptions global;
    app.add_option("--config", global.config_path, "Pipeline config JSON file");
    app.add_option("--workdir", global.workdir, "Working directory for staged outputs");
    auto* seed_opt = app.add_option("--seed", global.seed, "Override the config seed");
    app.add_flag("--mock-backends", global.mock_backends,
                 "Use deterministic offline mock backends");

    // --- workdir pipeline verbs ---
    std::string corpus_path, rollouts_path, plans_path;
    double wp_override = -1.0;
    int group_size_override = 0, min_support_override = -1;

    auto* decompose = app.add_subcommand("decompose", "Segment trajectories into triples");
    decompose->add_option("--corpus,--in", corpus_path, "Input corpus JSONL")->required();

    auto* cluster = app.add_subcommand("cluster", "Cluster subgoal/skill embeddings");
    auto* distill = app.add_subcommand("distill", "Distill one prototype per cluster");
    auto* judge = app.add_subcommand("judge", "Judge routed subgoals against prototypes");

    auto* calibrate = app.add_subcommand("calibrate", "Fit the score calibration table");
    calibrate->add_option("--min-support", min_support_override,
                          "Observations required before calibration applies");

    auto* reward = app.add_subcommand("reward", "Compose process and outcome rewards");
    reward->add_option("--wp", wp_override, "Process reward weight in [0,1]");

    auto* advantages = app.add_subcommand("advantages", "Group-relative advantages");
    advantages->add_option("--group-size", group_size_override, "Rollouts per problem group");

    auto* route_stage = app.add_subcommand("route", "Assign prototypes to subgoals");
    std::string route_library, route_in, route_out;
    route_stage->add_option("--library", route_library, "Prototype library JSON")->required();
    route_stage->add_option("--in", route_in, "Input corpus JSONL")->required();
    route_stage->add_option("--out", route_out, "Output routed JSONL")->required();

    auto* router_eval = app.add_subcommand("router-eval", "Span EM / skill / retrieval metrics");
    std::string pred_path, gold_path;
    router_eval->add_option("--pred", pred_path, "Predicted corpus JSONL")->required();
    router_eval->add_option("--gold", gold_path, "Gold corpus JSONL")->required();

    auto* metrics = app.add_subcommand("metrics", "Structural metrics report");
    std::string metrics_out;
    double tau_hi = -1.0, tau_lo = -1.0;
    int trials_override = 0, rollout_count_override = 0;
    std::string expect_plan_hash;
    metrics->add_option("--rollouts", rollouts_path, "Subgoal rollouts JSONL");
    metrics->add_option("--plans", plans_path, "Candidate plans JSONL");
    metrics->add_option("--out", metrics_out, "Output metrics JSON (default: print)");
    metrics->add_option("--tau-hi", tau_hi, "Viability threshold");
    metrics->add_option("--tau-lo", tau_lo, "Non-viability threshold");
    metrics->add_option("--trials", trials_override, "Executions per plan (T)");
    metrics->add_option("--R", rollout_count_override, "Rollouts per subgoal (R)");
    metrics->add_option("--expect-plan-hash", expect_plan_hash,
                        "Refuse to report when the plan set hash differs");

    auto* refresh = app.add_subcommand("refresh", "Re-cluster and refresh the library");

    auto* sweep = app.add_subcommand("sweep-wp", "Composite distribution per w_p value");
    std::vector<double> sweep_values{0.1, 0.3, 0.5, 0.7};
    sweep->add_option("--values", sweep_values, "Weight values to sweep");

    auto* run_all = app.add_subcommand("run-all", "Run every stage in order");
    run_all->add_option("--corpus", corpus_path, "Input corpus JSONL")->required();
    run_all->add_option("--rollouts", rollouts_path, "Subgoal rollouts JSONL");
    run_all->add_option("--plans", plans_path, "Candidate plans JSONL");

    auto* proto_card = app.add_subcommand("proto-card", "Print a prototype card");
    std::string card_library;
    int card_id = -1;
    proto_card->add_option("--library", card_library, "Prototype library JSON")->required();
    proto_card->add_option("--id", card_id, "Prototype id")->required();

    CLI11_PARSE(app, argc, argv);
    global.seed_set = seed_opt->count() > 0;

    try {
        scribe::PipelineInputs inputs;
        inputs.corpus = corpus_path;
        inputs.rollouts = rollouts_path;
        inputs.plans = plans_path;

        auto make_pipeline = [&](scribe::PipelineConfig config) {
            return std::make_unique<scribe::Pipeline>(global.workdir, std::move(config));
        };

        if (decompose->parsed()) {
            print_stage_record(
                make_pipeline(resolve_config(global))->run_stage(scribe::Stage::kDecompose, inputs));
        } else if (cluster->parsed()) {
            print_stage_record(
                make_pipeline(resolve_config(global))->run_stage(scribe::Stage::kCluster, inputs));
        } else if (distill->parsed()) {
            print_stage_record(
                make_pipeline(resolve_config(global))->run_stage(scribe::Stage::kDistill, inputs));
        } else if (judge->parsed()) {
            print_stage_record(
                make_pipeline(resolve_config(global))->run_stage(scribe::Stage::kJudge, inputs));
        } else if (calibrate->parsed()) {
            auto config = resolve_config(global);
            if (min_support_override >= 0) {
                config.min_support = min_support_override;
            }
            print_stage_record(
                make_pipeline(std::move(config))->run_stage(scribe::Stage::kCalibrate, inputs));
        } else if (reward->parsed()) {
            auto config = resolve_config(global);
            if (wp_override >= 0.0) {
                config.w_p = wp_override;
            }
            print_stage_record(
                make_pipeline(std::move(config))->run_stage(scribe::Stage::kReward, inputs));
        } else if (advantages->parsed()) {
            auto config = resolve_config(global);
            if (group_size_override > 0) {
                config.group_size = group_size_override;
            }
            print_stage_record(
                make_pipeline(std::move(config))->run_stage(scribe::Stage::kAdvantages, inputs));
        } else if (refresh->parsed()) {
            print_stage_record(
                make_pipeline(resolve_config(global))->run_stage(scribe::Stage::kRefresh, inputs));
        } else if (sweep->parsed()) {
            const auto report = make_pipeline(resolve_config(global))->sweep_wp(sweep_values);
            std::printf("%-6s %-8s %-10s %-10s %-10s %-10s\n", "w_p", "count", "mean", "min",
                        "max", "stdev");
            for (const auto& row : report.at("rows")) {
                std::printf("%-6.2f %-8zu %-10.4f %-10.4f %-10.4f %-10.4f\n",
                            row.at("w_p").get<double>(), row.at("count").get<std::size_t>(),
                            row.at("mean").get<double>(), row.at("min").get<double>(),
                            row.at("max").get<double>(), row.at("stdev").get<double>());
            }
        } else if (run_all->parsed()) {
            for (const auto& record : make_pipeline(resolve_config(global))->run_all(inputs)) {
                print_stage_record(record);
            }
        } else if (route_stage->parsed()) {
            auto config = resolve_config(global);
            const auto library = scribe::load_library(route_library);
            auto corpus = scribe::read_corpus(route_in);
            std::unique_ptr<scribe::EmbedBackend> backend;
            if (config.backend.mock) {
                backend = std::make_unique<scribe::MockEmbedBackend>(
                    std::size_t(config.backend.embed_dim));
            } else {
                auto hc = scribe::HttpBackendConfig::from_env();
                backend = std::make_unique<scribe::HttpEmbedBackend>(
                    std::make_shared<scribe::HttpSession>(hc));
            }
            for (auto& traj : corpus) {
                if (traj.triples.empty()) continue;
                auto result = scribe::route_subgoals(traj.id, traj.triples, library, *backend);
                traj.triples = std::move(result.triples);
            }
            scribe::write_corpus(corpus, route_out);
            std::printf("routed %zu trajectories -> %s\n", corpus.size(), route_out.c_str());
        } else if (router_eval->parsed()) {
            const auto report = scribe::evaluate_router(scribe::read_corpus(pred_path),
                                                        scribe::read_corpus(gold_path));
            std::printf("%-28s %8s\n", "Metric", "Value");
            std::printf("%-28s %8.4f\n", "Step segmentation (EM)", report.span_em);
            std::printf("%-28s %8.4f\n", "Skill prediction", report.skill_accuracy);
            std::printf("%-28s %8.4f\n", "Prototype retrieval", report.prototype_retrieval_accuracy);
        } else if (metrics->parsed()) {
            auto config = resolve_config(global);
            if (tau_hi >= 0.0) config.tau_hi = tau_hi;
            if (tau_lo >= 0.0) config.tau_lo = tau_lo;
            if (trials_override > 0) config.trials = trials_override;
            if (rollout_count_override > 0) config.rollout_count = rollout_count_override;

            std::vector<scribe::SubgoalRollouts> rollouts;
            if (!rollouts_path.empty()) {
                rollouts = scribe::read_rollouts(rollouts_path, config.rollout_count);
            }
            std::vector<scribe::PlanRecord> plans;
            if (!plans_path.empty()) {
                plans = scribe::read_plans(plans_path);
            }
            if (!expect_plan_hash.empty()) {
                const std::string actual = scribe::plan_set_hash(plans);
                if (actual != expect_plan_hash) {
                    throw scribe::HashMismatchError(
                        "plan set hash " + actual + " does not match expected " +
                        expect_plan_hash + "; candidate plans must stay fixed across checkpoints");
                }
            }
            scribe::MetricsOptions options;
            options.tau_hi = config.tau_hi;
            options.tau_lo = config.tau_lo;
            options.trials = config.trials;
            options.rollout_count = config.rollout_count;
            options.half_credit_ties = config.half_credit_ties;
            const auto report = scribe::metrics_report(rollouts, std::move(plans), options);
            const auto j = scribe::metrics_report_to_json(report);
            if (metrics_out.empty()) {
                std::printf("%s\n", j.dump(2).c_str());
            } else {
                scribe::write_file_atomic(metrics_out, j.dump(2) + "\n");
                std::printf("wrote %s\n", metrics_out.c_str());
            }
        } else if (proto_card->parsed()) {
            const auto library = scribe::load_library(card_library);
            const auto it = library.prototypes.find(card_id);
            if (it == library.prototypes.end()) {
                throw scribe::ScribeError("no prototype with id " + std::to_string(card_id));
            }
            std::printf("%s", scribe::prototype_card(it->second).c_str());
        }
        return 0;
    } catch (const scribe::ScribeError& e) {
        std::fprintf(stderr, "scribe: %s\n", e.what());
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "scribe: error: %s\n", e.what());
        return 1;
    }
}
