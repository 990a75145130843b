#include "scribe/mock_demo.hpp"

#include <algorithm>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "scribe/prompts.hpp"
#include "scribe/router.hpp"
#include "scribe/sha256.hpp"

namespace scribe {

namespace {

const char* kSkillVocab[] = {
    "algebraic manipulation",
    "bound synthesis and conclusion",
    "constraint optimization",
    "tool invocation and result parsing",
    "verification of intermediate results",
    "case analysis and enumeration",
};
constexpr std::size_t kSkillVocabSize = sizeof(kSkillVocab) / sizeof(kSkillVocab[0]);

std::string first_words(const std::string& text, std::size_t count) {
    std::istringstream in(text);
    std::string word, out;
    for (std::size_t i = 0; i < count && (in >> word); ++i) {
        if (!out.empty()) {
            out += ' ';
        }
        out += word;
    }
    return out.empty() ? "the task" : out;
}

std::string strip_digits(const std::string& text) {
    std::string out;
    for (char c : text) {
        if (c < '0' || c > '9') {
            out.push_back(c);
        }
    }
    return out;
}

// Splits the trace into up to three contiguous sentence groups and emits the
// numbered extraction format, quoting each group verbatim.
std::string demo_segmentation(const ChatRequest& request) {
    const std::string trace = extract_fenced_block(request.user_prompt);
    if (trace.empty()) {
        return "(1) subgoal: inspect the task\n    skill: case analysis and enumeration\n"
               "    step: " + request.user_prompt.substr(0, 20) + "\n";
    }

    std::string task;
    const auto problem_pos = request.user_prompt.find("Problem:\n");
    if (problem_pos != std::string::npos) {
        const auto start = problem_pos + 9;
        const auto end = request.user_prompt.find("\n\nTrajectory:", start);
        task = request.user_prompt.substr(start, end == std::string::npos ? 40 : end - start);
    }

    // Sentence boundaries: position one past each ". ".
    std::vector<std::size_t> starts{0};
    for (std::size_t i = 0; i + 1 < trace.size(); ++i) {
        if (trace[i] == '.' && trace[i + 1] == ' ') {
            starts.push_back(i + 2);
        }
    }
    const std::size_t sentences = starts.size();
    const std::size_t chunks = std::min<std::size_t>(3, sentences);
    const std::string topic = first_words(task, 4);

    std::ostringstream out;
    for (std::size_t c = 0; c < chunks; ++c) {
        const std::size_t first = c * sentences / chunks;
        const std::size_t next = (c + 1) * sentences / chunks;
        const std::size_t begin = starts[first];
        std::size_t end = next < sentences ? starts[next] : trace.size();
        // Trim the separator space so the quoted step ends at the period.
        while (end > begin && (trace[end - 1] == ' ' || trace[end - 1] == '\n')) {
            --end;
        }
        const std::string chunk = trace.substr(begin, end - begin);
        const std::string subgoal =
            "complete stage " + std::string(1, char('a' + c)) + " of " + strip_digits(topic);
        const std::string skill =
            kSkillVocab[sha256_seed(subgoal) % kSkillVocabSize];
        out << "(" << c + 1 << ") subgoal: " << subgoal << "\n    skill: " << skill
            << "\n    step: " << chunk << "\n";
    }
    return out.str();
}

std::string demo_distillation(const ChatRequest& request) {
    // The member list reuses the segmentation format, so the segmentation
    // parser reads it back.
    const auto members_pos = request.user_prompt.find("Members:\n");
    std::vector<SegmentItem> members;
    if (members_pos != std::string::npos) {
        members = parse_segmentation_response(request.user_prompt.substr(members_pos + 9));
    }

    std::string skill = "general reasoning";
    if (!members.empty()) {
        std::map<std::string, int> counts;
        for (const auto& m : members) {
            ++counts[m.skill];
        }
        int best = 0;
        for (const auto& [name, count] : counts) {
            if (count > best) {
                best = count;
                skill = name;
            }
        }
    }
    const std::string clean = strip_digits(skill);

    nlohmann::json proto;
    proto["skill_name"] = clean;
    proto["knowledge_scope"] =
        "Core operations, preconditions and failure modes of " + clean + ".";
    proto["applicable_scenario"] =
        "Subgoals whose dominant reasoning operation is " + clean + ".";
    proto["canonical_pattern"] = {"identify the inputs the skill needs",
                                  "apply " + clean + " to the subgoal",
                                  "state the intermediate result explicitly"};
    proto["rubric"] = {{"0", "wrong skill or fabricated result"},
                       {"1", "correct skill with a major logical gap"},
                       {"2", "correct result with a minor slip or missing justification"},
                       {"3", "rigorous, complete application of the skill"}};
    proto["traps"] = nlohmann::json::array(
        {{{"name", "unstated assumption"},
          {"score", 2},
          {"reason", "the step silently relies on a fact it never establishes"}}});
    proto["reference_step"] =
        members.empty() ? "apply the skill to the subgoal" : members.front().step.substr(0, 80);
    return "```json\n" + proto.dump(2) + "\n```\n";
}

std::string demo_judge(const ChatRequest& request) {
    const std::string step = extract_fenced_block(request.user_prompt);
    const int score = int(sha256_seed(step) % 4);
    return "score: " + std::to_string(score) +
           "\nrationale: deterministic evaluation of the quoted step against the rubric.\n";
}

}  // namespace

std::shared_ptr<MockChatBackend> make_demo_chat_backend() {
    auto backend = std::make_shared<MockChatBackend>();
    backend->set_handler([](const ChatRequest& request) -> std::optional<std::string> {
        if (request.system_prompt == kSegmentSystem) {
            return demo_segmentation(request);
        }
        if (request.system_prompt == kDistillSystem) {
            return demo_distillation(request);
        }
        if (request.system_prompt == kJudgeSystem) {
            return demo_judge(request);
        }
        return std::nullopt;
    });
    return backend;
}

}  // namespace scribe
