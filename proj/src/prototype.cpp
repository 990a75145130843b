#include "scribe/prototype.hpp"

#include <algorithm>
#include <cctype>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "scribe/errors.hpp"
#include "scribe/parallel.hpp"
#include "scribe/prompts.hpp"
#include "scribe/rng.hpp"
#include "scribe/sha256.hpp"

namespace scribe {

using nlohmann::json;

namespace {

// Numerals with at least two digits ("44", "44.75", "1000"); single digits
// are too common in rubric text to treat as instance-specific.
std::vector<std::string> extract_numerals(const std::string& text) {
    std::vector<std::string> out;
    std::size_t i = 0;
    while (i < text.size()) {
        if (std::isdigit(static_cast<unsigned char>(text[i]))) {
            std::size_t j = i;
            int digits = 0;
            bool seen_dot = false;
            while (j < text.size()) {
                const char c = text[j];
                if (std::isdigit(static_cast<unsigned char>(c))) {
                    ++digits;
                    ++j;
                } else if (c == '.' && !seen_dot && j + 1 < text.size() &&
                           std::isdigit(static_cast<unsigned char>(text[j + 1]))) {
                    seen_dot = true;
                    ++j;
                } else {
                    break;
                }
            }
            if (digits >= 2) {
                out.push_back(text.substr(i, j - i));
            }
            i = j;
        } else {
            ++i;
        }
    }
    return out;
}

std::string find_member_numeral(const SkillPrototype& proto,
                                const std::vector<SubgoalTriple>& members,
                                const std::vector<std::string>& member_steps) {
    std::set<std::string> numerals;
    for (const auto& m : members) {
        for (auto& n : extract_numerals(m.subgoal)) numerals.insert(n);
        for (auto& n : extract_numerals(m.skill)) numerals.insert(n);
    }
    for (const auto& s : member_steps) {
        for (auto& n : extract_numerals(s)) numerals.insert(n);
    }
    for (const auto& n : numerals) {
        if (proto.skill_name.find(n) != std::string::npos ||
            proto.knowledge_scope.find(n) != std::string::npos) {
            return n;
        }
    }
    return {};
}

std::string extract_json_payload(const std::string& response) {
    const auto fence = response.find("```");
    if (fence != std::string::npos) {
        auto start = response.find('\n', fence);
        if (start == std::string::npos) {
            return {};
        }
        ++start;
        const auto close = response.find("```", start);
        if (close == std::string::npos) {
            return {};
        }
        return response.substr(start, close - start);
    }
    // No fence: accept a bare JSON object.
    const auto brace = response.find('{');
    if (brace == std::string::npos) {
        return {};
    }
    return response.substr(brace);
}

}  // namespace

void validate_prototype(const SkillPrototype& prototype) {
    if (prototype.skill_name.empty()) {
        throw ValidationError("prototype " + std::to_string(prototype.id) + ": empty skill_name");
    }
    if (prototype.rubric.size() != 4) {
        throw ValidationError("prototype " + std::to_string(prototype.id) +
                              ": rubric must have exactly the four keys 0,1,2,3");
    }
    for (int score = 0; score <= 3; ++score) {
        auto it = prototype.rubric.find(score);
        if (it == prototype.rubric.end() || it->second.empty()) {
            throw ValidationError("prototype " + std::to_string(prototype.id) +
                                  ": rubric level " + std::to_string(score) +
                                  " missing or empty");
        }
    }
    for (const auto& trap : prototype.traps) {
        if (trap.mapped_score < 0 || trap.mapped_score > 3) {
            throw ValidationError("prototype " + std::to_string(prototype.id) + ": trap \"" +
                                  trap.name + "\" maps to out-of-range score " +
                                  std::to_string(trap.mapped_score));
        }
    }
}

std::string rubric_block(const SkillPrototype& prototype) {
    std::ostringstream out;
    out << "Skill: " << prototype.skill_name << "\n";
    if (!prototype.applicable_scenario.empty()) {
        out << "Use when: " << prototype.applicable_scenario << "\n";
    }
    out << "Scoring rubric:\n";
    for (int score = 3; score >= 0; --score) {
        out << "  " << score << ": " << prototype.rubric.at(score) << "\n";
    }
    if (!prototype.traps.empty()) {
        out << "Common traps:\n";
        for (const auto& trap : prototype.traps) {
            out << "  - " << trap.name << " (score " << trap.mapped_score << "): "
                << trap.penalty_reason << "\n";
        }
    }
    return out.str();
}

std::string prototype_card(const SkillPrototype& prototype) {
    static const char* kRoman[] = {"(i)", "(ii)", "(iii)", "(iv)", "(v)", "(vi)", "(vii)", "(viii)"};
    std::ostringstream out;
    out << "=== Skill Prototype #" << prototype.id << " (v" << prototype.version << ") ===\n";
    out << "Skill Name: " << prototype.skill_name << "\n\n";
    out << "Knowledge Scope: " << prototype.knowledge_scope << "\n\n";
    out << "Applicable Scenario: " << prototype.applicable_scenario << "\n\n";
    out << "Canonical Reasoning Pattern:\n";
    for (std::size_t i = 0; i < prototype.canonical_pattern.size(); ++i) {
        out << "  " << (i < 8 ? kRoman[i] : "(*)") << " " << prototype.canonical_pattern[i] << "\n";
    }
    out << "\nJudging Rubric (0-3):\n";
    for (int score = 3; score >= 0; --score) {
        out << "  " << score << ": " << prototype.rubric.at(score) << "\n";
    }
    out << "\nCommon Traps & Scoring:\n";
    if (prototype.traps.empty()) {
        out << "  (none)\n";
    }
    for (const auto& trap : prototype.traps) {
        out << "  - " << trap.name << " -> score " << trap.mapped_score << ": "
            << trap.penalty_reason << "\n";
    }
    out << "\nRepresentative Reference Step: " << prototype.reference_step << "\n";
    return out.str();
}

SkillPrototype parse_prototype_response(const std::string& response) {
    const std::string payload = extract_json_payload(response);
    if (payload.empty()) {
        throw ParseError("prototype response contains no JSON object");
    }
    json j;
    try {
        j = json::parse(payload);
    } catch (const json::exception& e) {
        throw ParseError(std::string("prototype response is not valid JSON: ") + e.what());
    }

    SkillPrototype proto;
    try {
        proto.skill_name = j.at("skill_name").get<std::string>();
        proto.knowledge_scope = j.at("knowledge_scope").get<std::string>();
        proto.applicable_scenario = j.at("applicable_scenario").get<std::string>();
        proto.canonical_pattern = j.at("canonical_pattern").get<std::vector<std::string>>();
        for (const auto& [key, value] : j.at("rubric").items()) {
            int score = 0;
            try {
                score = std::stoi(key);
            } catch (...) {
                throw ParseError("rubric key \"" + key + "\" is not an integer");
            }
            proto.rubric[score] = value.get<std::string>();
        }
        if (j.contains("traps")) {
            for (const auto& t : j.at("traps")) {
                TrapEntry trap;
                trap.name = t.at("name").get<std::string>();
                trap.mapped_score = t.at("score").get<int>();
                trap.penalty_reason = t.at("reason").get<std::string>();
                proto.traps.push_back(std::move(trap));
            }
        }
        proto.reference_step = j.value("reference_step", std::string());
    } catch (const json::exception& e) {
        throw ParseError(std::string("prototype response missing fields: ") + e.what());
    }

    try {
        validate_prototype(proto);
    } catch (const ValidationError& e) {
        throw ParseError(e.what());
    }
    if (proto.canonical_pattern.empty()) {
        throw ParseError("prototype canonical_pattern must not be empty");
    }
    return proto;
}

SkillPrototype distill_prototype(const std::vector<SubgoalTriple>& members, ChatBackend& backend,
                                 const DistillOptions& options,
                                 const std::vector<std::string>& member_steps) {
    if (members.empty()) {
        throw std::invalid_argument("distill_prototype: cluster has no members");
    }

    // Deterministic sample of up to sample_cap members, seeded by content so
    // rebuilds are stable regardless of call order.
    std::vector<std::size_t> indices(members.size());
    std::iota(indices.begin(), indices.end(), 0);
    if (members.size() > std::size_t(options.sample_cap)) {
        std::string content;
        for (const auto& m : members) {
            content += skill_text(m);
            content += '\x1f';
        }
        std::mt19937_64 rng(options.seed ^ sha256_seed(content));
        for (std::size_t i = indices.size() - 1; i > 0; --i) {
            std::swap(indices[i], indices[uniform_index(rng, i + 1)]);
        }
        indices.resize(std::size_t(options.sample_cap));
        std::sort(indices.begin(), indices.end());
    }
    std::vector<SubgoalTriple> sampled;
    std::vector<std::string> sampled_steps;
    for (std::size_t i : indices) {
        sampled.push_back(members[i]);
        sampled_steps.push_back(i < member_steps.size() ? member_steps[i] : std::string());
    }

    PromptPair prompt = distillation_prompt(sampled, sampled_steps);
    std::string failure;
    for (int attempt = 0; attempt <= options.max_reprompts; ++attempt) {
        ChatRequest req;
        req.system_prompt = prompt.system;
        req.user_prompt = prompt.user;
        if (attempt > 0) {
            req.user_prompt += "\n\nThe previous response was invalid: " + failure +
                               ". Respond again with exactly one fenced JSON object.";
        }
        const std::string response = backend.chat(req);
        try {
            SkillPrototype proto = parse_prototype_response(response);
            const std::string numeral = find_member_numeral(proto, sampled, sampled_steps);
            if (!numeral.empty()) {
                throw ParseError("skill_name/knowledge_scope quotes member-specific numeral \"" +
                                 numeral + "\" instead of abstracting it");
            }
            return proto;
        } catch (const ParseError& e) {
            failure = e.what();
        }
    }
    throw ParseError("distill_prototype: no valid prototype after " +
                     std::to_string(options.max_reprompts) + " reprompts: " + failure);
}

std::vector<SubgoalTriple> member_triples(const std::vector<TripleRef>& members,
                                          const std::vector<Trajectory>& corpus) {
    std::map<std::string, const Trajectory*> index;
    for (const auto& t : corpus) {
        index[t.id] = &t;
    }
    std::vector<SubgoalTriple> out;
    for (const auto& ref : members) {
        auto it = index.find(ref.trajectory_id);
        if (it == index.end() || ref.triple_index >= it->second->triples.size()) {
            throw std::invalid_argument("member_triples: unknown triple " + ref.trajectory_id +
                                        "#" + std::to_string(ref.triple_index));
        }
        out.push_back(it->second->triples[ref.triple_index]);
    }
    return out;
}

std::vector<std::string> member_step_texts(const std::vector<TripleRef>& members,
                                           const std::vector<Trajectory>& corpus) {
    std::map<std::string, const Trajectory*> index;
    for (const auto& t : corpus) {
        index[t.id] = &t;
    }
    std::vector<std::string> out;
    for (const auto& ref : members) {
        auto it = index.find(ref.trajectory_id);
        if (it == index.end() || ref.triple_index >= it->second->triples.size()) {
            throw std::invalid_argument("member_step_texts: unknown triple " + ref.trajectory_id +
                                        "#" + std::to_string(ref.triple_index));
        }
        const auto& traj = *it->second;
        const StepSpan span = traj.triples[ref.triple_index].span;
        if (span.end <= traj.trace_text.size() && span.start < span.end) {
            out.push_back(traj.trace_text.substr(span.start, span.end - span.start));
        } else {
            out.emplace_back();
        }
    }
    return out;
}

PrototypeLibrary build_library(const ClusterModel& model, const std::vector<Trajectory>& corpus,
                               ChatBackend& backend, const DistillOptions& options) {
    const auto ids = model.cluster_ids();
    if (ids.empty()) {
        throw std::invalid_argument("build_library: cluster model has no clusters");
    }

    PrototypeLibrary library;
    library.library_version = 1;
    library.built_from_hash = sha256_hex(cluster_model_to_json(model).dump());

    // Gather member context up front; only the distillation chat calls fan
    // out. Library assembly below is a single-threaded merge.
    struct Job {
        int id;
        std::vector<SubgoalTriple> triples;
        std::vector<std::string> steps;
    };
    std::vector<Job> jobs;
    for (int id : ids) {
        const auto members = model.members_of(id);
        library.built_from_members[id] = members;
        library.centroids[id] = model.centroids.at(id);
        jobs.push_back({id, member_triples(members, corpus), member_step_texts(members, corpus)});
    }

    std::vector<SkillPrototype> distilled(jobs.size());
    parallel_for(jobs.size(), options.workers, [&](std::size_t k) {
        try {
            distilled[k] = distill_prototype(jobs[k].triples, backend, options, jobs[k].steps);
        } catch (const std::exception& e) {
            throw ScribeError("build_library: distillation failed for cluster " +
                              std::to_string(jobs[k].id) + ": " + e.what());
        }
    });
    for (std::size_t k = 0; k < jobs.size(); ++k) {
        distilled[k].id = jobs[k].id;
        distilled[k].version = 1;
        library.prototypes[jobs[k].id] = std::move(distilled[k]);
    }
    return library;
}

double jaccard(const std::vector<TripleRef>& a, const std::vector<TripleRef>& b) {
    if (a.empty() && b.empty()) {
        return 1.0;
    }
    std::set<TripleRef> sa(a.begin(), a.end());
    std::set<TripleRef> sb(b.begin(), b.end());
    std::size_t inter = 0;
    for (const auto& x : sa) {
        inter += sb.count(x);
    }
    const std::size_t uni = sa.size() + sb.size() - inter;
    return uni == 0 ? 1.0 : double(inter) / double(uni);
}

PrototypeLibrary refresh_library(const PrototypeLibrary& library, const ClusterModel& new_model,
                                 const std::vector<Trajectory>& corpus, ChatBackend& backend,
                                 const DistillOptions& options) {
    PrototypeLibrary next;
    next.library_version = library.library_version + 1;
    next.built_from_hash = sha256_hex(cluster_model_to_json(new_model).dump());

    struct Job {
        int id;
        int version;
        std::vector<SubgoalTriple> triples;
        std::vector<std::string> steps;
    };
    std::vector<Job> jobs;
    for (int id : new_model.cluster_ids()) {
        const auto members = new_model.members_of(id);
        next.built_from_members[id] = members;
        next.centroids[id] = new_model.centroids.at(id);

        const auto old_proto = library.prototypes.find(id);
        const auto old_members = library.built_from_members.find(id);
        const bool carry = old_proto != library.prototypes.end() &&
                           old_members != library.built_from_members.end() &&
                           jaccard(old_members->second, members) >= 0.9;
        if (carry) {
            next.prototypes[id] = old_proto->second;
            continue;
        }
        const int version =
            old_proto != library.prototypes.end() ? old_proto->second.version + 1 : 1;
        jobs.push_back(
            {id, version, member_triples(members, corpus), member_step_texts(members, corpus)});
    }

    std::vector<SkillPrototype> distilled(jobs.size());
    parallel_for(jobs.size(), options.workers, [&](std::size_t k) {
        try {
            distilled[k] = distill_prototype(jobs[k].triples, backend, options, jobs[k].steps);
        } catch (const std::exception& e) {
            throw ScribeError("refresh_library: distillation failed for cluster " +
                              std::to_string(jobs[k].id) + ": " + e.what());
        }
    });
    for (std::size_t k = 0; k < jobs.size(); ++k) {
        distilled[k].id = jobs[k].id;
        distilled[k].version = jobs[k].version;
        next.prototypes[jobs[k].id] = std::move(distilled[k]);
    }
    return next;
}

json library_to_json(const PrototypeLibrary& library) {
    json protos = json::array();
    for (const auto& [id, p] : library.prototypes) {
        json pj;
        pj["id"] = id;
        pj["skill_name"] = p.skill_name;
        pj["knowledge_scope"] = p.knowledge_scope;
        pj["applicable_scenario"] = p.applicable_scenario;
        pj["canonical_pattern"] = p.canonical_pattern;
        json rubric;
        for (const auto& [score, text] : p.rubric) {
            rubric[std::to_string(score)] = text;
        }
        pj["rubric"] = rubric;
        json traps = json::array();
        for (const auto& t : p.traps) {
            traps.push_back({{"name", t.name}, {"score", t.mapped_score}, {"reason", t.penalty_reason}});
        }
        pj["traps"] = traps;
        pj["reference_step"] = p.reference_step;
        pj["version"] = p.version;
        protos.push_back(std::move(pj));
    }

    json centroids;
    for (const auto& [id, c] : library.centroids) {
        centroids[std::to_string(id)] = c.values;
    }
    json members;
    for (const auto& [id, refs] : library.built_from_members) {
        json lst = json::array();
        for (const auto& r : refs) {
            lst.push_back({{"trajectory_id", r.trajectory_id}, {"triple_index", r.triple_index}});
        }
        members[std::to_string(id)] = std::move(lst);
    }

    return json{{"library_version", library.library_version},
                {"built_from", json{{"model_hash", library.built_from_hash}, {"members", members}}},
                {"prototypes", protos},
                {"centroids", centroids}};
}

PrototypeLibrary library_from_json(const json& j) {
    PrototypeLibrary library;
    library.library_version = j.at("library_version").get<int>();
    library.built_from_hash = j.at("built_from").at("model_hash").get<std::string>();
    for (const auto& [key, lst] : j.at("built_from").at("members").items()) {
        std::vector<TripleRef> refs;
        for (const auto& r : lst) {
            refs.push_back({r.at("trajectory_id").get<std::string>(),
                            r.at("triple_index").get<std::size_t>()});
        }
        library.built_from_members[std::stoi(key)] = std::move(refs);
    }
    for (const auto& pj : j.at("prototypes")) {
        SkillPrototype p;
        p.id = pj.at("id").get<int>();
        p.skill_name = pj.at("skill_name").get<std::string>();
        p.knowledge_scope = pj.at("knowledge_scope").get<std::string>();
        p.applicable_scenario = pj.at("applicable_scenario").get<std::string>();
        p.canonical_pattern = pj.at("canonical_pattern").get<std::vector<std::string>>();
        for (const auto& [key, text] : pj.at("rubric").items()) {
            p.rubric[std::stoi(key)] = text.get<std::string>();
        }
        for (const auto& t : pj.at("traps")) {
            p.traps.push_back({t.at("name").get<std::string>(), t.at("score").get<int>(),
                               t.at("reason").get<std::string>()});
        }
        p.reference_step = pj.at("reference_step").get<std::string>();
        p.version = pj.at("version").get<int>();
        validate_prototype(p);  // rubric completeness is checked at load
        library.prototypes[p.id] = std::move(p);
    }
    for (const auto& [key, values] : j.at("centroids").items()) {
        library.centroids[std::stoi(key)] = EmbeddingVector{values.get<std::vector<double>>()};
    }
    return library;
}

void save_library(const PrototypeLibrary& library, const std::filesystem::path& path) {
    write_file_atomic(path, library_to_json(library).dump(2) + "\n");
}

PrototypeLibrary load_library(const std::filesystem::path& path) {
    try {
        return library_from_json(json::parse(read_file(path)));
    } catch (const json::exception& e) {
        throw ParseError("prototype library " + path.string() + ": " + e.what());
    }
}

}  // namespace scribe
