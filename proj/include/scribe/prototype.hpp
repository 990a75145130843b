#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "scribe/backend.hpp"
#include "scribe/clustering.hpp"
#include "scribe/trajectory.hpp"

namespace scribe {

struct TrapEntry {
    std::string name;
    int mapped_score = 0;  // in {0..3}
    std::string penalty_reason;

    bool operator==(const TrapEntry&) const = default;
};

struct SkillPrototype {
    int id = 0;  // tied to the cluster id
    std::string skill_name;
    std::string knowledge_scope;
    std::string applicable_scenario;
    std::vector<std::string> canonical_pattern;
    std::map<int, std::string> rubric;  // exactly the four keys 0..3
    std::vector<TrapEntry> traps;
    std::string reference_step;
    int version = 1;

    bool operator==(const SkillPrototype&) const = default;
};

// Throws ValidationError when the rubric/trap invariants do not hold.
void validate_prototype(const SkillPrototype& prototype);

// Rubric + trap table rendered for the judge prompt.
std::string rubric_block(const SkillPrototype& prototype);

// Human-readable card for the CLI.
std::string prototype_card(const SkillPrototype& prototype);

struct PrototypeLibrary {
    std::map<int, SkillPrototype> prototypes;
    std::map<int, EmbeddingVector> centroids;
    std::string built_from_hash;                         // hash of the source ClusterModel
    std::map<int, std::vector<TripleRef>> built_from_members;  // snapshot for refresh Jaccard
    int library_version = 1;

    bool operator==(const PrototypeLibrary&) const = default;
};

struct DistillOptions {
    int sample_cap = 12;   // members included in the distillation prompt
    int max_reprompts = 2;
    std::uint64_t seed = 0;
    int workers = 1;  // concurrent distillation calls during build/refresh
};

// Parses a fenced-JSON prototype response. Throws ParseError on schema
// violations; the numeral check against member texts is reported the same way.
SkillPrototype parse_prototype_response(const std::string& response);

// One distillation call per cluster; reprompts on malformed output, and on
// output whose skill_name/knowledge_scope quotes member-specific numerals
// verbatim instead of abstracting them away.
SkillPrototype distill_prototype(const std::vector<SubgoalTriple>& members, ChatBackend& backend,
                                 const DistillOptions& options = {},
                                 const std::vector<std::string>& member_steps = {});

PrototypeLibrary build_library(const ClusterModel& model, const std::vector<Trajectory>& corpus,
                               ChatBackend& backend, const DistillOptions& options = {});

// Clusters whose membership stayed within Jaccard >= 0.9 of the snapshot keep
// their prototype and version; the rest are re-distilled with the version
// bumped. The library version always increments.
PrototypeLibrary refresh_library(const PrototypeLibrary& library, const ClusterModel& new_model,
                                 const std::vector<Trajectory>& corpus, ChatBackend& backend,
                                 const DistillOptions& options = {});

double jaccard(const std::vector<TripleRef>& a, const std::vector<TripleRef>& b);

nlohmann::json library_to_json(const PrototypeLibrary& library);
PrototypeLibrary library_from_json(const nlohmann::json& j);
void save_library(const PrototypeLibrary& library, const std::filesystem::path& path);
PrototypeLibrary load_library(const std::filesystem::path& path);

// Span texts for a cluster's members, used as distillation context.
std::vector<std::string> member_step_texts(const std::vector<TripleRef>& members,
                                           const std::vector<Trajectory>& corpus);
std::vector<SubgoalTriple> member_triples(const std::vector<TripleRef>& members,
                                          const std::vector<Trajectory>& corpus);

}  // namespace scribe
