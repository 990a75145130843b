#pragma once

#include <compare>
#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

namespace scribe {

// Half-open character span [start, end) into a trajectory's trace_text.
struct StepSpan {
    std::size_t start = 0;
    std::size_t end = 0;

    auto operator<=>(const StepSpan&) const = default;
};

struct SubgoalTriple {
    std::string subgoal;
    std::string skill;
    StepSpan span;
    std::optional<int> prototype_id;  // absent before routing

    bool operator==(const SubgoalTriple&) const = default;
};

enum class DomainTag { kMath, kToolUse };

std::string to_string(DomainTag tag);
DomainTag domain_tag_from_string(const std::string& s);

struct Trajectory {
    std::string id;
    std::string task_text;
    std::string trace_text;
    std::vector<SubgoalTriple> triples;
    DomainTag domain_tag = DomainTag::kMath;
    std::optional<double> outcome;  // final-answer correctness in [0,1]

    bool operator==(const Trajectory&) const = default;
};

// Identifies one triple inside a corpus.
struct TripleRef {
    std::string trajectory_id;
    std::size_t triple_index = 0;

    auto operator<=>(const TripleRef&) const = default;
};

enum class ValidationMode { kStrictCoverage, kNonOverlapOnly };

struct Violation {
    std::string message;
    std::vector<std::size_t> triple_indices;
};

struct ValidationReport {
    std::vector<Violation> violations;

    bool ok() const { return violations.empty(); }
};

// Checks the span invariants: bounds, sort-by-start, pairwise non-overlap,
// and (in strict mode) full coverage of [0, len(trace_text)). Violations are
// data, not faults.
ValidationReport validate_triples(const Trajectory& trajectory, ValidationMode mode);

nlohmann::json triple_to_json(const SubgoalTriple& triple);
SubgoalTriple triple_from_json(const nlohmann::json& j);

nlohmann::json trajectory_to_json(const Trajectory& trajectory);
Trajectory trajectory_from_json(const nlohmann::json& j);

// JSONL corpus, one trajectory per line, UTF-8. Reading reports malformed
// lines by line number; writing requires every trajectory to pass
// non-overlap validation and is atomic (temp file + rename).
std::vector<Trajectory> read_corpus(const std::filesystem::path& path);
void write_corpus(const std::vector<Trajectory>& trajectories, const std::filesystem::path& path);

// Atomic file write helper shared by every stage that persists output.
void write_file_atomic(const std::filesystem::path& path, const std::string& content);
std::string read_file(const std::filesystem::path& path);

}  // namespace scribe
