#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>

#include "scribe/backend.hpp"
#include "scribe/clustering.hpp"
#include "scribe/errors.hpp"
#include "scribe/prototype.hpp"

using namespace scribe;
namespace fs = std::filesystem;

namespace {

const char* kBoundPrototypeJson = R"(```json
{
  "skill_name": "Bound-Based Conclusion and Synthesis",
  "knowledge_scope": "Upper/lower bounding; extremal principles; attainability arguments; case coverage; domain constraints; logical implication.",
  "applicable_scenario": "Subgoals that terminate a reasoning chain by drawing a final conclusion from previously derived constraints.",
  "canonical_pattern": [
    "identify the intermediate bounds and constraints the conclusion must follow from",
    "determine whether the subgoal requires an implication or a tightness claim",
    "if concluding an extremum, check tightness via a construction or equality condition",
    "verify domain restrictions and case completeness",
    "state the final conclusion succinctly"
  ],
  "rubric": {
    "3": "conclusion follows rigorously from prior results and addresses tightness and feasibility",
    "2": "correct strategy and conclusion with minor slips or obvious-but-unstated justifications",
    "1": "correct skill type but substantial omissions leave the conclusion unsupported",
    "0": "incompatible or premature conclusion, or complete misapplication of bounding logic"
  },
  "traps": [
    {"name": "Boundary Leak", "score": 2, "reason": "the method is correct but the final conclusion lacks the discrete precision the domain requires"},
    {"name": "Implicit Tightness", "score": 1, "reason": "a bound is not a maximum until attainability is shown"}
  ],
  "reference_step": "from the impossibility bound for large n and feasibility of small cases, conclude the maximal level"
}
```)";

std::vector<SubgoalTriple> bound_members() {
    SubgoalTriple t;
    t.subgoal = "conclude the maximum level from the derived bounds";
    t.skill = "bound-based conclusion";
    t.span = {0, 10};
    return {t};
}

std::vector<std::string> bound_steps() {
    return {"concluding c < 44.75 without stating c <= 44 leaves the subgoal incomplete"};
}

// Handler-backed mock: reprompts rewrite the user prompt, so fixture tables
// keyed on exact prompts cannot serve retry tests.
std::shared_ptr<MockChatBackend> handler_backend(
    std::function<std::string(const ChatRequest&, int)> fn) {
    auto backend = std::make_shared<MockChatBackend>();
    auto counter = std::make_shared<int>(0);
    backend->set_handler([fn, counter](const ChatRequest& req) -> std::optional<std::string> {
        return fn(req, (*counter)++);
    });
    return backend;
}

SkillPrototype minimal_prototype(int id, const std::string& name) {
    SkillPrototype p;
    p.id = id;
    p.skill_name = name;
    p.knowledge_scope = "scope of " + name;
    p.applicable_scenario = "whenever " + name + " dominates the subgoal";
    p.canonical_pattern = {"step one", "step two"};
    p.rubric = {{0, "wrong"}, {1, "major gap"}, {2, "minor slip"}, {3, "rigorous"}};
    p.traps = {{"rushed synthesis", 1, "conclusion stated before support"}};
    p.reference_step = "apply " + name;
    return p;
}

std::string prototype_response_named(const std::string& name) {
    auto j = library_to_json(PrototypeLibrary{});  // unused; build fresh below
    (void)j;
    nlohmann::json pj;
    pj["skill_name"] = name;
    pj["knowledge_scope"] = "scope of " + name;
    pj["applicable_scenario"] = "whenever applicable";
    pj["canonical_pattern"] = {"step one", "step two"};
    pj["rubric"] = {{"0", "wrong"}, {"1", "major gap"}, {"2", "minor slip"}, {"3", "rigorous"}};
    pj["traps"] = nlohmann::json::array();
    pj["reference_step"] = "ref";
    return "```json\n" + pj.dump() + "\n```";
}

struct LibraryFixture {
    ClusterModel model;
    std::vector<Trajectory> corpus;
};

// Three clusters of two members each over two trajectories.
LibraryFixture library_fixture() {
    LibraryFixture f;
    for (int traj = 0; traj < 2; ++traj) {
        Trajectory t;
        t.id = "traj" + std::to_string(traj);
        t.task_text = "task";
        t.trace_text = "alpha part. beta part. gamma part.";
        t.triples.push_back({"work on alpha", "alpha skill", {0, 11}, std::nullopt});
        t.triples.push_back({"work on beta", "beta skill", {12, 22}, std::nullopt});
        t.triples.push_back({"work on gamma", "gamma skill", {23, 34}, std::nullopt});
        f.corpus.push_back(std::move(t));
    }
    for (int cluster = 0; cluster < 3; ++cluster) {
        for (int traj = 0; traj < 2; ++traj) {
            ClusterAssignment a;
            a.ref = {"traj" + std::to_string(traj), std::size_t(cluster)};
            a.cluster_id = cluster;
            a.source = ClusterSource::kDensity;
            a.membership_strength = 1.0;
            f.model.assignments.push_back(a);
        }
        std::vector<double> c(4, 0.0);
        c[cluster] = 1.0;
        f.model.centroids[cluster] = EmbeddingVector{c};
        f.model.sources[cluster] = ClusterSource::kDensity;
    }
    return f;
}

// Responds with a prototype named after the dominant member skill.
std::string echo_skill_response(const ChatRequest& req) {
    const auto members_pos = req.user_prompt.find("Members:\n");
    std::string name = "generic skill";
    for (const char* candidate : {"alpha skill", "beta skill", "gamma skill", "delta skill"}) {
        if (req.user_prompt.find(candidate, members_pos) != std::string::npos) {
            name = candidate;
            break;
        }
    }
    return prototype_response_named(name);
}

}  // namespace

TEST_CASE("distill parses the bound-based prototype with its trap table") {
    auto backend = handler_backend(
        [](const ChatRequest&, int) { return std::string(kBoundPrototypeJson); });
    const auto proto = distill_prototype(bound_members(), *backend, {}, bound_steps());
    CHECK(proto.skill_name == "Bound-Based Conclusion and Synthesis");
    REQUIRE(proto.traps.size() == 2);
    CHECK(proto.traps[0].name == "Boundary Leak");
    CHECK(proto.traps[0].mapped_score == 2);
    CHECK(proto.traps[1].name == "Implicit Tightness");
    CHECK(proto.traps[1].mapped_score == 1);
    CHECK(proto.rubric.size() == 4);
    CHECK(proto.canonical_pattern.size() == 5);
}

TEST_CASE("distill reprompts on a rubric missing a level, then fails") {
    int calls = 0;
    auto backend = handler_backend([&](const ChatRequest&, int) {
        ++calls;
        nlohmann::json pj;
        pj["skill_name"] = "some skill";
        pj["knowledge_scope"] = "scope";
        pj["applicable_scenario"] = "scenario";
        pj["canonical_pattern"] = {"a"};
        pj["rubric"] = {{"0", "w"}, {"2", "m"}, {"3", "r"}};  // level 1 missing
        pj["traps"] = nlohmann::json::array();
        pj["reference_step"] = "ref";
        return "```json\n" + pj.dump() + "\n```";
    });
    CHECK_THROWS_AS(distill_prototype(bound_members(), *backend), ParseError);
    CHECK(calls == 3);  // initial attempt + 2 reprompts
}

TEST_CASE("distill works from a single-member cluster") {
    auto backend = handler_backend(
        [](const ChatRequest&, int) { return prototype_response_named("solo skill"); });
    const auto proto = distill_prototype(bound_members(), *backend);
    CHECK(proto.skill_name == "solo skill");
}

TEST_CASE("distill rejects an empty cluster") {
    auto backend = handler_backend(
        [](const ChatRequest&, int) { return prototype_response_named("x"); });
    CHECK_THROWS_AS(distill_prototype({}, *backend), std::invalid_argument);
}

TEST_CASE("distill rejects member numerals quoted in the scope, accepting a rewrite") {
    int calls = 0;
    auto backend = handler_backend([&](const ChatRequest&, int attempt) {
        ++calls;
        nlohmann::json pj;
        pj["skill_name"] = "bound synthesis";
        pj["knowledge_scope"] = attempt == 0 ? "bounding values like c < 44.75 and flooring"
                                             : "bounding continuous values and flooring to the domain";
        pj["applicable_scenario"] = "scenario";
        pj["canonical_pattern"] = {"a"};
        pj["rubric"] = {{"0", "w"}, {"1", "g"}, {"2", "m"}, {"3", "r"}};
        pj["traps"] = nlohmann::json::array();
        pj["reference_step"] = "ref";
        return "```json\n" + pj.dump() + "\n```";
    });
    const auto proto = distill_prototype(bound_members(), *backend, {}, bound_steps());
    CHECK(calls == 2);
    CHECK(proto.knowledge_scope.find("44.75") == std::string::npos);
}

TEST_CASE("build_library distills one prototype per cluster at version 1") {
    auto fixture = library_fixture();
    auto backend = handler_backend([](const ChatRequest& req, int) { return echo_skill_response(req); });
    const auto library = build_library(fixture.model, fixture.corpus, *backend);
    CHECK(library.library_version == 1);
    REQUIRE(library.prototypes.size() == 3);
    CHECK(library.prototypes.at(0).skill_name == "alpha skill");
    CHECK(library.prototypes.at(1).skill_name == "beta skill");
    CHECK(library.prototypes.at(2).skill_name == "gamma skill");
    for (const auto& [id, proto] : library.prototypes) {
        CHECK(proto.id == id);
        CHECK(proto.version == 1);
    }
    CHECK(library.centroids.size() == 3);
}

TEST_CASE("build_library names the failing cluster") {
    auto fixture = library_fixture();
    auto backend = handler_backend([](const ChatRequest& req, int) -> std::string {
        if (req.user_prompt.find("gamma skill") != std::string::npos) {
            return "not json at all";
        }
        return echo_skill_response(req);
    });
    CHECK_THROWS_WITH_AS(build_library(fixture.model, fixture.corpus, *backend),
                         doctest::Contains("cluster 2"), ScribeError);
}

TEST_CASE("build_library is deterministic for fixed fixtures") {
    auto fixture = library_fixture();
    auto backend = handler_backend([](const ChatRequest& req, int) { return echo_skill_response(req); });
    const auto a = build_library(fixture.model, fixture.corpus, *backend);
    const auto b = build_library(fixture.model, fixture.corpus, *backend);
    CHECK(a == b);
    CHECK(library_to_json(a).dump() == library_to_json(b).dump());
}

TEST_CASE("refresh with unchanged clusters carries prototypes and bumps the library version") {
    auto fixture = library_fixture();
    auto backend = handler_backend([](const ChatRequest& req, int) { return echo_skill_response(req); });
    const auto library = build_library(fixture.model, fixture.corpus, *backend);
    const auto before = backend->call_count();
    const auto refreshed = refresh_library(library, fixture.model, fixture.corpus, *backend);
    CHECK(backend->call_count() == before);  // pure carry-over, no distillation calls
    CHECK(refreshed.library_version == 2);
    CHECK(refreshed.prototypes == library.prototypes);
}

TEST_CASE("refresh re-distills clusters whose membership moved past the Jaccard gate") {
    auto fixture = library_fixture();
    auto backend = handler_backend([](const ChatRequest& req, int) { return echo_skill_response(req); });
    const auto library = build_library(fixture.model, fixture.corpus, *backend);

    // Cluster 0 gains 50% new members (Jaccard 2/4 = 0.5 < 0.9): re-distilled.
    auto new_model = fixture.model;
    auto corpus = fixture.corpus;
    Trajectory extra;
    extra.id = "traj2";
    extra.task_text = "task";
    extra.trace_text = "alpha part. alpha again.";
    extra.triples.push_back({"more alpha", "alpha skill", {0, 11}, std::nullopt});
    extra.triples.push_back({"yet more alpha", "alpha skill", {12, 24}, std::nullopt});
    corpus.push_back(extra);
    for (std::size_t i = 0; i < 2; ++i) {
        ClusterAssignment a;
        a.ref = {"traj2", i};
        a.cluster_id = 0;
        a.source = ClusterSource::kDensity;
        a.membership_strength = 1.0;
        new_model.assignments.push_back(a);
    }
    CHECK(jaccard(fixture.model.members_of(0), new_model.members_of(0)) == doctest::Approx(0.5));

    const auto refreshed = refresh_library(library, new_model, corpus, *backend);
    CHECK(refreshed.prototypes.at(0).version == 2);
    CHECK(refreshed.prototypes.at(1).version == 1);
    CHECK(refreshed.prototypes.at(2).version == 1);
    CHECK(refreshed.library_version == 2);
}

TEST_CASE("refresh adds prototypes for new clusters and drops removed ones") {
    auto fixture = library_fixture();
    auto backend = handler_backend([](const ChatRequest& req, int) { return echo_skill_response(req); });
    const auto library = build_library(fixture.model, fixture.corpus, *backend);

    auto new_model = fixture.model;
    auto corpus = fixture.corpus;
    Trajectory extra;
    extra.id = "traj3";
    extra.task_text = "task";
    extra.trace_text = "delta part here.";
    extra.triples.push_back({"work on delta", "delta skill", {0, 10}, std::nullopt});
    corpus.push_back(extra);
    ClusterAssignment a;
    a.ref = {"traj3", 0};
    a.cluster_id = 3;
    a.source = ClusterSource::kDensity;
    a.membership_strength = 1.0;
    new_model.assignments.push_back(a);
    std::vector<double> c(4, 0.0);
    c[3] = 1.0;
    new_model.centroids[3] = EmbeddingVector{c};
    new_model.sources[3] = ClusterSource::kDensity;

    const auto refreshed = refresh_library(library, new_model, corpus, *backend);
    REQUIRE(refreshed.prototypes.size() == 4);
    CHECK(refreshed.prototypes.at(3).skill_name == "delta skill");
    CHECK(refreshed.prototypes.at(3).version == 1);

    // Every cluster id in the new model has exactly one prototype.
    for (int id : new_model.cluster_ids()) {
        CHECK(refreshed.prototypes.count(id) == 1);
    }
}

TEST_CASE("library JSON round-trips losslessly") {
    auto fixture = library_fixture();
    auto backend = handler_backend([](const ChatRequest& req, int) { return echo_skill_response(req); });
    const auto library = build_library(fixture.model, fixture.corpus, *backend);
    CHECK(library_from_json(library_to_json(library)) == library);

    const auto path = fs::temp_directory_path() / "scribe_prototype_test" / "library.json";
    save_library(library, path);
    CHECK(load_library(path) == library);
}

TEST_CASE("loading validates rubric completeness") {
    auto fixture = library_fixture();
    auto backend = handler_backend([](const ChatRequest& req, int) { return echo_skill_response(req); });
    auto j = library_to_json(build_library(fixture.model, fixture.corpus, *backend));
    j["prototypes"][0]["rubric"].erase("2");
    CHECK_THROWS_AS(library_from_json(j), ValidationError);
}

TEST_CASE("jaccard handles the edge cases") {
    const std::vector<TripleRef> a{{"t", 0}, {"t", 1}};
    const std::vector<TripleRef> b{{"t", 1}, {"t", 2}};
    CHECK(jaccard(a, a) == 1.0);
    CHECK(jaccard(a, b) == doctest::Approx(1.0 / 3.0));
    CHECK(jaccard({}, {}) == 1.0);
    CHECK(jaccard(a, {}) == 0.0);
}

TEST_CASE("validate_prototype rejects out-of-range trap scores") {
    auto p = minimal_prototype(0, "skill");
    p.traps.push_back({"bad trap", 4, "reason"});
    CHECK_THROWS_AS(validate_prototype(p), ValidationError);
}

TEST_CASE("prototype card shows rubric, traps and pattern") {
    const auto card = prototype_card(minimal_prototype(7, "tool fallback handling"));
    CHECK(card.find("Skill Prototype #7") != std::string::npos);
    CHECK(card.find("tool fallback handling") != std::string::npos);
    CHECK(card.find("3: rigorous") != std::string::npos);
    CHECK(card.find("rushed synthesis -> score 1") != std::string::npos);
    CHECK(card.find("(i) step one") != std::string::npos);
}
