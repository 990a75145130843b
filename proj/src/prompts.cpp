#include "scribe/prompts.hpp"

#include <sstream>

#include "scribe/errors.hpp"

namespace scribe {

namespace {

const char* kFormatBlock =
    "Use this format for every item:\n"
    "(1) subgoal: <what this subgoal accomplishes>\n"
    "    skill: <main skill needed>\n"
    "    step: <verbatim excerpt from the trajectory where the skill is applied>\n\n"
    "The step field must quote the trajectory text exactly so it can be located.\n";

std::string math_main_instructions() {
    return std::string(
               "I will give you a math problem and a solution trajectory. Break the solution "
               "into several subgoals, where completing these subgoals in order is sufficient "
               "to solve the whole problem. For each subgoal, explicitly name the main skill "
               "required, and give one short step showing how it is applied.\n\n") +
           kFormatBlock;
}

std::string math_narrative_instructions() {  // M1
    return std::string(
               "You are given a complete solution to a math problem. Identify the key "
               "intermediate subgoals required to reach the final answer. For each subgoal, "
               "describe the mathematical objective being achieved and the primary reasoning "
               "skill involved. Focus on meaningful reasoning stages rather than low-level "
               "algebraic steps. The subgoals should be ordered and together sufficient to "
               "solve the problem.\n\n") +
           kFormatBlock;
}

std::string math_coverage_instructions() {  // M2
    return std::string(
               "You will receive a solution trajectory for a math problem. Segment the entire "
               "solution into a sequence of subgoals such that every part of the trajectory "
               "belongs to exactly one subgoal. Each subgoal should correspond to a coherent "
               "reasoning objective. For each subgoal, identify the dominant mathematical "
               "skill applied. Ensure no overlap or omission across subgoals.\n\n") +
           kFormatBlock;
}

std::string tool_main_instructions() {  // T
    return std::string(
               "You will receive a multi-turn, tool-using conversation trajectory. The user's "
               "final goal is achieved step by step through the completion of multiple "
               "subgoals. Identify all subgoals that are carried out in order to accomplish "
               "the user's final goal. For each subgoal, specify the primary skill required "
               "and the corresponding step in the original trajectory. Each step must be a "
               "single contiguous, unmodified subpart of the trajectory. If the task is "
               "partially completed or fails, include subgoals for request decomposition, "
               "recognition of capability limitations, or fallback handling.\n\n") +
           kFormatBlock;
}

std::string tool_intent_instructions() {  // T1
    return std::string(
               "You are given a multi-turn, tool-using interaction. Identify the sequence of "
               "subgoals the system completes in order to satisfy the user's request. Each "
               "subgoal should describe a concrete intent or intermediate objective and the "
               "primary capability required to achieve it. Subgoals may span multiple turns "
               "and should reflect mid-level planning rather than surface actions.\n\n") +
           kFormatBlock;
}

std::string tool_failure_instructions() {  // T2
    return std::string(
               "Given a tool-using conversation trajectory, segment it into subgoals such "
               "that the entire interaction is covered. If the trajectory includes partial "
               "failures, corrections, or fallback behaviors, include them as explicit "
               "subgoals. For each subgoal, identify the dominant tool-use or reasoning "
               "skill involved.\n\n") +
           kFormatBlock;
}

}  // namespace

std::vector<std::string> segmentation_variants(DomainTag domain) {
    if (domain == DomainTag::kMath) {
        return {"M", "M1", "M2"};
    }
    return {"T", "T1", "T2"};
}

std::string default_variant(DomainTag domain) {
    return domain == DomainTag::kMath ? "M" : "T";
}

PromptPair segmentation_prompt(const Trajectory& trajectory, const std::string& variant_id) {
    std::string instructions;
    if (variant_id == "M" || variant_id.empty()) {
        instructions = math_main_instructions();
    } else if (variant_id == "M1") {
        instructions = math_narrative_instructions();
    } else if (variant_id == "M2") {
        instructions = math_coverage_instructions();
    } else if (variant_id == "T") {
        instructions = tool_main_instructions();
    } else if (variant_id == "T1") {
        instructions = tool_intent_instructions();
    } else if (variant_id == "T2") {
        instructions = tool_failure_instructions();
    } else {
        throw std::invalid_argument("unknown segmentation prompt variant \"" + variant_id + "\"");
    }

    std::ostringstream user;
    user << instructions << "\nProblem:\n" << trajectory.task_text << "\n\nTrajectory:\n\"\"\"\n"
         << trajectory.trace_text << "\n\"\"\"\n";
    return {kSegmentSystem, user.str()};
}

PromptPair distillation_prompt(const std::vector<SubgoalTriple>& members,
                               const std::vector<std::string>& member_steps) {
    std::ostringstream user;
    user << "Below are subgoal instances that were clustered together because they exercise "
            "the same reasoning skill. Distill one skill prototype that covers them.\n\n"
            "Abstract away instance-specific details such as concrete numerical values; "
            "describe the reusable pattern. Respond with exactly one fenced JSON object:\n\n"
            "```json\n"
            "{\n"
            "  \"skill_name\": \"...\",\n"
            "  \"knowledge_scope\": \"...\",\n"
            "  \"applicable_scenario\": \"...\",\n"
            "  \"canonical_pattern\": [\"step 1\", \"step 2\"],\n"
            "  \"rubric\": {\"0\": \"...\", \"1\": \"...\", \"2\": \"...\", \"3\": \"...\"},\n"
            "  \"traps\": [{\"name\": \"...\", \"score\": 2, \"reason\": \"...\"}],\n"
            "  \"reference_step\": \"...\"\n"
            "}\n"
            "```\n\n"
            "Members:\n";
    for (std::size_t i = 0; i < members.size(); ++i) {
        user << "(" << i + 1 << ") subgoal: " << members[i].subgoal << "\n    skill: "
             << members[i].skill << "\n    step: "
             << (i < member_steps.size() ? member_steps[i] : std::string()) << "\n";
    }
    return {kDistillSystem, user.str()};
}

PromptPair judge_prompt(const std::string& rubric_block, const std::string& subgoal,
                        const std::string& step_text) {
    std::ostringstream user;
    user << rubric_block
         << "\nEvaluate how well the step below accomplishes its subgoal according to the "
            "rubric. Check every trap; when a trap applies, the trap's score caps the result.\n"
            "Respond with exactly two lines:\n"
            "score: <integer 0-3>\n"
            "rationale: <one sentence>\n"
         << "\nSubgoal: " << subgoal << "\n\nStep content:\n\"\"\"\n" << step_text << "\n\"\"\"\n";
    return {kJudgeSystem, user.str()};
}

std::string extract_fenced_block(const std::string& text) {
    const std::string fence = "\"\"\"";
    const auto open = text.find(fence);
    if (open == std::string::npos) {
        return {};
    }
    auto start = open + fence.size();
    if (start < text.size() && text[start] == '\n') {
        ++start;
    }
    const auto close = text.find(fence, start);
    if (close == std::string::npos) {
        return {};
    }
    auto end = close;
    if (end > start && text[end - 1] == '\n') {
        --end;
    }
    return text.substr(start, end - start);
}

}  // namespace scribe
