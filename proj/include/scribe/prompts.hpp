#pragma once

#include <string>
#include <vector>

#include "scribe/trajectory.hpp"

namespace scribe {

struct PromptPair {
    std::string system;
    std::string user;
};

// Registered segmentation prompt variants. "M" and "T" are the default
// extraction prompts per domain; M1/M2 and T1/T2 are the agreement-check
// variants (narrative vs coverage-constrained, intent vs failure-aware).
std::vector<std::string> segmentation_variants(DomainTag domain);
std::string default_variant(DomainTag domain);

PromptPair segmentation_prompt(const Trajectory& trajectory, const std::string& variant_id);

// Members rendered as numbered subgoal/skill/step items; the response must
// be a fenced JSON prototype object.
PromptPair distillation_prompt(const std::vector<SubgoalTriple>& members,
                               const std::vector<std::string>& member_steps);

PromptPair judge_prompt(const std::string& rubric_block, const std::string& subgoal,
                        const std::string& step_text);

// Markers shared with the offline demo backend so it can read structured
// content back out of a prompt.
inline constexpr const char* kSegmentSystem =
    "You decompose reasoning trajectories into ordered subgoal, skill and step triples.";
inline constexpr const char* kDistillSystem =
    "You distill a reusable skill prototype from a cluster of related subgoals.";
inline constexpr const char* kJudgeSystem =
    "You grade one reasoning step against a fixed skill rubric and trap list.";

// Extracts the first """-fenced block from a prompt (the trajectory trace or
// step content), or an empty string when absent.
std::string extract_fenced_block(const std::string& text);

}  // namespace scribe
