#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "scribe/backend.hpp"
#include "scribe/errors.hpp"
#include "scribe/prompts.hpp"
#include "scribe/prototype.hpp"
#include "scribe/reward.hpp"
#include "scribe/rng.hpp"

using namespace scribe;

namespace {

SkillPrototype bound_prototype(int id = 0) {
    SkillPrototype p;
    p.id = id;
    p.skill_name = "bound-based conclusion";
    p.knowledge_scope = "bounding and tightness arguments";
    p.applicable_scenario = "concluding subgoals";
    p.canonical_pattern = {"collect bounds", "check tightness", "conclude"};
    p.rubric = {{0, "wrong or premature conclusion"},
                {1, "major logical gap"},
                {2, "correct conclusion with minor slip"},
                {3, "rigorous conclusion with tightness"}};
    p.traps = {{"boundary leak", 2, "continuous bound left undiscretized"}};
    p.reference_step = "conclude the max level";
    return p;
}

struct JudgeFixture {
    Trajectory context;
    SubgoalTriple triple;
    SkillPrototype prototype;
};

JudgeFixture judge_fixture() {
    JudgeFixture f;
    f.context.id = "traj0";
    f.context.task_text = "task";
    f.context.trace_text = "the bound gives c < 44.75 so c <= 44 and the level is 4.";
    f.prototype = bound_prototype();
    f.triple.subgoal = "conclude the maximum level";
    f.triple.skill = f.prototype.skill_name;
    f.triple.span = {0, f.context.trace_text.size()};
    f.triple.prototype_id = f.prototype.id;
    return f;
}

std::shared_ptr<MockChatBackend> judge_backend(const JudgeFixture& f, const std::string& response) {
    auto backend = std::make_shared<MockChatBackend>();
    const std::string step =
        f.context.trace_text.substr(f.triple.span.start, f.triple.span.end - f.triple.span.start);
    const auto prompt = judge_prompt(rubric_block(f.prototype), f.triple.subgoal, step);
    backend->add_fixture(prompt.system, prompt.user, response);
    return backend;
}

// One observation = one scored subgoal on its own trajectory.
void add_observations(std::vector<SubgoalScore>& scores, std::map<std::string, int>& outcomes,
                      int prototype_id, int raw, int successes, int failures) {
    for (int i = 0; i < successes + failures; ++i) {
        const std::string id = "p" + std::to_string(prototype_id) + "r" + std::to_string(raw) +
                               "n" + std::to_string(i);
        SubgoalScore s;
        s.ref = {id, 0};
        s.prototype_id = prototype_id;
        s.raw_score = raw;
        s.calibrated = raw;
        scores.push_back(s);
        outcomes[id] = i < successes ? 1 : 0;
    }
}

SubgoalScore quick_score(int proto, int raw) {
    SubgoalScore s;
    s.ref = {"t", 0};
    s.prototype_id = proto;
    s.raw_score = raw;
    s.calibrated = raw;
    return s;
}

}  // namespace

TEST_CASE("judge parses a score/rationale response") {
    const auto parsed =
        parse_judge_response("score: 2, rationale: boundary leak - bound not discretized");
    REQUIRE(parsed.has_value());
    CHECK(parsed->score == 2);
    CHECK(parsed->rationale == "boundary leak - bound not discretized");
}

TEST_CASE("judge_subgoal returns the parsed score") {
    auto f = judge_fixture();
    auto backend =
        judge_backend(f, "score: 2\nrationale: boundary leak - bound not discretized");
    const auto score = judge_subgoal(f.triple, f.prototype, f.context, *backend, 0);
    CHECK(score.raw_score == 2);
    CHECK(score.prototype_id == 0);
    CHECK(score.calibrated == 2.0);
    CHECK(score.ref.trajectory_id == "traj0");
    CHECK(score.rationale.find("boundary leak") != std::string::npos);
}

TEST_CASE("judge_subgoal accepts a rubric-level-3 verdict") {
    auto f = judge_fixture();
    auto backend = judge_backend(f, "score: 3\nrationale: rigorous conclusion with tightness");
    CHECK(judge_subgoal(f.triple, f.prototype, f.context, *backend, 0).raw_score == 3);
}

TEST_CASE("out-of-range judge scores get one reprompt then fail") {
    auto f = judge_fixture();
    auto backend = std::make_shared<MockChatBackend>();
    int calls = 0;
    backend->set_handler([&](const ChatRequest&) -> std::optional<std::string> {
        ++calls;
        return "5";
    });
    CHECK_THROWS_WITH_AS(judge_subgoal(f.triple, f.prototype, f.context, *backend, 0),
                         doctest::Contains("outside"), ScribeError);
    CHECK(calls == 2);  // initial + one reprompt
}

TEST_CASE("judge_subgoal requires the triple routed to the prototype") {
    auto f = judge_fixture();
    auto backend = judge_backend(f, "score: 1\nrationale: x");
    f.triple.prototype_id = 9;
    CHECK_THROWS_AS(judge_subgoal(f.triple, f.prototype, f.context, *backend, 0),
                    std::invalid_argument);
    f.triple.prototype_id.reset();
    CHECK_THROWS_AS(judge_subgoal(f.triple, f.prototype, f.context, *backend, 0),
                    std::invalid_argument);
}

TEST_CASE("monotone success rates leave calibration at raw") {
    std::vector<SubgoalScore> scores;
    std::map<std::string, int> outcomes;
    add_observations(scores, outcomes, 0, 0, 1, 9);   // 0.1
    add_observations(scores, outcomes, 0, 1, 3, 7);   // 0.3
    add_observations(scores, outcomes, 0, 2, 6, 4);   // 0.6
    add_observations(scores, outcomes, 0, 3, 9, 1);   // 0.9
    const auto table = build_calibration(scores, outcomes, 10);
    for (int raw = 0; raw <= 3; ++raw) {
        CHECK(table.lookup(0, raw) == double(raw));
    }
    CHECK(table.monotone());
}

TEST_CASE("equal success rates pool adjacent levels to a weighted raw mean") {
    std::vector<SubgoalScore> scores;
    std::map<std::string, int> outcomes;
    add_observations(scores, outcomes, 0, 0, 1, 19);   // 0.05
    add_observations(scores, outcomes, 0, 1, 6, 14);   // 0.30
    add_observations(scores, outcomes, 0, 2, 18, 2);   // 0.90, support 20
    add_observations(scores, outcomes, 0, 3, 18, 2);   // 0.90, support 20
    const auto table = build_calibration(scores, outcomes, 10);
    const double pooled2 = table.lookup(0, 2);
    const double pooled3 = table.lookup(0, 3);
    CHECK(pooled2 == pooled3);
    CHECK(pooled2 >= 2.0);
    CHECK(pooled2 <= 3.0);
    // Hand-run pooling: equal supports of 20 give (2*20 + 3*20) / 40 = 2.5.
    CHECK(pooled2 == doctest::Approx(2.5).epsilon(1e-12));
    CHECK(table.lookup(0, 0) == 0.0);
    CHECK(table.lookup(0, 1) == 1.0);
    CHECK(table.monotone());
}

TEST_CASE("an inversion cascades through pooling and stays monotone") {
    std::vector<SubgoalScore> scores;
    std::map<std::string, int> outcomes;
    add_observations(scores, outcomes, 0, 0, 18, 2);   // 0.9
    add_observations(scores, outcomes, 0, 1, 10, 10);  // 0.5
    add_observations(scores, outcomes, 0, 2, 2, 18);   // 0.1
    add_observations(scores, outcomes, 0, 3, 19, 1);   // 0.95
    const auto table = build_calibration(scores, outcomes, 10);
    // Levels 0,1,2 pooled to (0+1+2)*20/60 = 1; level 3 stays.
    CHECK(table.lookup(0, 0) == doctest::Approx(1.0));
    CHECK(table.lookup(0, 1) == doctest::Approx(1.0));
    CHECK(table.lookup(0, 2) == doctest::Approx(1.0));
    CHECK(table.lookup(0, 3) == 3.0);
    CHECK(table.monotone());
}

TEST_CASE("cells below min_support keep calibrated equal to raw") {
    std::vector<SubgoalScore> scores;
    std::map<std::string, int> outcomes;
    add_observations(scores, outcomes, 0, 2, 1, 0);  // support 1 < 10
    add_observations(scores, outcomes, 0, 3, 0, 12); // support 12, rate 0 (would pool if eligible)
    const auto table = build_calibration(scores, outcomes, 10);
    CHECK(table.lookup(0, 2) == 2.0);
    CHECK(table.lookup(0, 3) == 3.0);
    REQUIRE(table.find(0, 2) != nullptr);
    CHECK(table.find(0, 2)->support == 1);
}

TEST_CASE("build_calibration names the trajectory missing an outcome") {
    std::vector<SubgoalScore> scores{quick_score(0, 2)};
    scores[0].ref.trajectory_id = "orphan";
    CHECK_THROWS_WITH_AS(build_calibration(scores, {}, 10), doctest::Contains("orphan"),
                         ScribeError);
}

TEST_CASE("calibration is monotone on randomized fixtures") {
    std::mt19937_64 rng(4242);
    for (int round = 0; round < 50; ++round) {
        std::vector<SubgoalScore> scores;
        std::map<std::string, int> outcomes;
        const int protos = 1 + int(rng() % 4);
        for (int p = 0; p < protos; ++p) {
            for (int raw = 0; raw <= 3; ++raw) {
                const int n = int(rng() % 25);
                const int succ = n > 0 ? int(rng() % (n + 1)) : 0;
                add_observations(scores, outcomes, p, raw, succ, n - succ);
            }
        }
        if (scores.empty()) continue;
        const auto table = build_calibration(scores, outcomes, int(rng() % 12));
        CHECK(table.monotone());
    }
}

TEST_CASE("calibration table round-trips through JSON") {
    std::vector<SubgoalScore> scores;
    std::map<std::string, int> outcomes;
    add_observations(scores, outcomes, 0, 2, 18, 2);
    add_observations(scores, outcomes, 0, 3, 18, 2);
    add_observations(scores, outcomes, 1, 1, 3, 7);
    const auto table = build_calibration(scores, outcomes, 10);
    CHECK(calibration_from_json(calibration_to_json(table)) == table);
}

TEST_CASE("process reward normalizes the weighted calibrated mean into [0,1]") {
    CalibrationTable identity;
    CHECK(process_reward({quick_score(0, 3), quick_score(0, 3)}, identity) == 1.0);
    CHECK(process_reward({quick_score(0, 3), quick_score(0, 0)}, identity) == 0.5);
    // weights {1,3} on calibrated {2,3}: (1*(2/3) + 3*1) / 4.
    const double r = process_reward({quick_score(0, 2), quick_score(0, 3)}, identity, {1.0, 3.0});
    CHECK(r == doctest::Approx((1.0 * (2.0 / 3.0) + 3.0) / 4.0).epsilon(1e-12));
    CHECK(r == doctest::Approx(0.9167).epsilon(1e-4));
}

TEST_CASE("process reward applies the calibration lookup") {
    std::vector<SubgoalScore> obs;
    std::map<std::string, int> outcomes;
    add_observations(obs, outcomes, 0, 2, 18, 2);
    add_observations(obs, outcomes, 0, 3, 18, 2);
    const auto table = build_calibration(obs, outcomes, 10);
    // Both levels pooled to 2.5, so both subgoals contribute 2.5/3.
    const double r = process_reward({quick_score(0, 2), quick_score(0, 3)}, table);
    CHECK(r == doctest::Approx(2.5 / 3.0).epsilon(1e-12));
}

TEST_CASE("process reward is 1 exactly when every calibrated score is 3") {
    CalibrationTable identity;
    std::mt19937_64 rng(606);
    for (int round = 0; round < 100; ++round) {
        std::vector<SubgoalScore> scores;
        bool all_top = true;
        const int n = 1 + int(rng() % 6);
        for (int i = 0; i < n; ++i) {
            const int raw = int(rng() % 4);
            all_top &= raw == 3;
            scores.push_back(quick_score(0, raw));
        }
        const double r = process_reward(scores, identity);
        CHECK(r >= 0.0);
        CHECK(r <= 1.0);
        CHECK((r == 1.0) == all_top);
    }
}

TEST_CASE("process reward rejects empty and mismatched inputs") {
    CalibrationTable table;
    CHECK_THROWS_AS(process_reward({}, table), std::invalid_argument);
    CHECK_THROWS_AS(process_reward({quick_score(0, 3)}, table, {1.0, 2.0}),
                    std::invalid_argument);
    CHECK_THROWS_AS(process_reward({quick_score(0, 3)}, table, {0.0}), std::invalid_argument);
}

TEST_CASE("composite reward matches the affine mix") {
    CHECK(compose_reward("t", 1.0, 1.0, 0.3).composite == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(compose_reward("t", 0.0, 1.0, 0.3).composite == doctest::Approx(0.7).epsilon(1e-12));
    CHECK(compose_reward("t", 2.0 / 3.0, 1.0, 0.3).composite ==
          doctest::Approx(0.9).epsilon(1e-12));
    // Boundary weights reduce to one component exactly.
    CHECK(compose_reward("t", 0.42, 0.77, 0.0).composite == 0.77);
    CHECK(compose_reward("t", 0.42, 0.77, 1.0).composite == 0.42);
}

TEST_CASE("composite reward rejects out-of-domain arguments") {
    CHECK_THROWS_AS(compose_reward("t", -0.1, 0.5, 0.3), std::invalid_argument);
    CHECK_THROWS_AS(compose_reward("t", 0.5, 1.1, 0.3), std::invalid_argument);
    CHECK_THROWS_AS(compose_reward("t", 0.5, 0.5, 1.5), std::invalid_argument);
}

TEST_CASE("group advantages reproduce the worked examples") {
    CHECK(group_advantages({1, 1, 1, 1}) == std::vector<double>{0, 0, 0, 0});
    const auto pair = group_advantages({0, 1}, 0.0);
    CHECK(pair[0] == doctest::Approx(-1.0).epsilon(1e-12));
    CHECK(pair[1] == doctest::Approx(1.0).epsilon(1e-12));
    const auto quad = group_advantages({0, 0, 1, 1}, 0.0);
    CHECK(quad[0] == doctest::Approx(-1.0).epsilon(1e-12));
    CHECK(quad[3] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK_THROWS_AS(group_advantages({1.0}), std::invalid_argument);
}

TEST_CASE("group advantages are zero-mean, shift-invariant and scale-invariant") {
    std::mt19937_64 rng(777);
    for (int round = 0; round < 100; ++round) {
        std::vector<double> rewards(8);
        for (auto& r : rewards) {
            r = uniform01(rng);
        }
        const auto base = group_advantages(rewards, 0.0);
        double mean = 0.0;
        for (double a : base) mean += a;
        CHECK(std::abs(mean / 8.0) <= 1e-9);

        const double shift = 10.0 * uniform01(rng) - 5.0;
        const double scale = 0.1 + 10.0 * uniform01(rng);
        std::vector<double> shifted(8), scaled(8);
        for (int i = 0; i < 8; ++i) {
            shifted[i] = rewards[i] + shift;
            scaled[i] = rewards[i] * scale;
        }
        const auto a_shift = group_advantages(shifted, 0.0);
        const auto a_scale = group_advantages(scaled, 0.0);
        for (int i = 0; i < 8; ++i) {
            CHECK(std::abs(a_shift[i] - base[i]) <= 1e-9);
            CHECK(std::abs(a_scale[i] - base[i]) <= 1e-9);
        }
    }
}

namespace {

// Library + anchors + handler that judges anchor prompts deterministically,
// with an optional scripted perturbation for one anchor.
struct AnchorFixture {
    PrototypeLibrary library;
    AnchorSet anchors;
    std::shared_ptr<MockChatBackend> backend;
    std::shared_ptr<std::map<std::string, int>> calls;
};

AnchorFixture anchor_fixture(int count, int perturb_anchor = -1) {
    AnchorFixture f;
    f.library.prototypes[0] = bound_prototype();
    f.library.centroids[0] = EmbeddingVector{{1.0, 0.0}};
    for (int i = 0; i < count; ++i) {
        f.anchors.anchors.push_back({"anchor subgoal " + std::to_string(i), 0});
    }
    f.calls = std::make_shared<std::map<std::string, int>>();
    auto calls = f.calls;
    f.backend = std::make_shared<MockChatBackend>();
    f.backend->set_handler([calls, perturb_anchor](const ChatRequest& req)
                               -> std::optional<std::string> {
        for (int i = 0; i < 64; ++i) {
            const std::string marker = "anchor subgoal " + std::to_string(i) + "\n";
            if (req.user_prompt.find("Subgoal: anchor subgoal " + std::to_string(i) + "\n") !=
                std::string::npos) {
                const int n = (*calls)["a" + std::to_string(i)]++;
                if (i == perturb_anchor && n == 4) {
                    return std::string("score: 3\nrationale: perturbed");
                }
                return std::string("score: 2\nrationale: stable");
            }
            (void)marker;
        }
        return std::nullopt;
    });
    return f;
}

}  // namespace

TEST_CASE("a deterministic judge never flags anchor drift") {
    auto f = anchor_fixture(20);
    const auto report = check_anchors(f.anchors, f.library, *f.backend, "ckpt1");
    CHECK(report.entries.size() == 20);
    CHECK(report.drift_count() == 0);
    // Second checkpoint, same judge: still stable.
    const auto again = check_anchors(f.anchors, f.library, *f.backend, "ckpt2");
    CHECK(again.drift_count() == 0);
    CHECK(f.anchors.history[0].size() == 2);
}

TEST_CASE("a scripted 2,2,2,2,3 anchor is flagged, and only that anchor") {
    auto f = anchor_fixture(20, 7);
    const auto report = check_anchors(f.anchors, f.library, *f.backend, "ckpt1");
    CHECK(report.drift_count() == 1);
    for (const auto& e : report.entries) {
        CHECK(e.drifting == (e.anchor_index == 7));
    }
    CHECK(report.entries[7].scores == std::vector<int>{2, 2, 2, 2, 3});
}

TEST_CASE("a modal move from the first checkpoint is flagged as drift") {
    auto f = anchor_fixture(3);
    (void)check_anchors(f.anchors, f.library, *f.backend, "ckpt1");
    // From now on anchor 1 answers 3 consistently.
    auto calls = f.calls;
    f.backend->set_handler([calls](const ChatRequest& req) -> std::optional<std::string> {
        if (req.user_prompt.find("Subgoal: anchor subgoal 1\n") != std::string::npos) {
            return std::string("score: 3\nrationale: moved");
        }
        return std::string("score: 2\nrationale: stable");
    });
    const auto report = check_anchors(f.anchors, f.library, *f.backend, "ckpt2");
    CHECK(report.drift_count() == 1);
    CHECK(report.entries[1].drifting);
    CHECK(report.entries[1].reason.find("modal score moved") != std::string::npos);
}

TEST_CASE("check_anchors rejects an empty anchor set") {
    auto f = anchor_fixture(1);
    AnchorSet empty;
    CHECK_THROWS_AS(check_anchors(empty, f.library, *f.backend, "ckpt"), std::invalid_argument);
}

TEST_CASE("kendall tau handles agreement, reversal and the all-tied convention") {
    CHECK(kendall_tau({1, 2, 3}, {1, 2, 3}) == 1.0);
    CHECK(kendall_tau({1, 2, 3}, {3, 2, 1}) == -1.0);
    CHECK(kendall_tau({2, 2, 2}, {2, 2, 2}) == 1.0);
    CHECK(kendall_tau({0, 1, 2, 3}, {0, 2, 1, 3}) == doctest::Approx(4.0 / 6.0));
}

TEST_CASE("span overlap F1 conventions") {
    CHECK(span_overlap_f1({}, {}) == 1.0);
    CHECK(span_overlap_f1({}, {{0, 10}}) == 0.0);
    CHECK(span_overlap_f1({{0, 10}}, {{0, 10}}) == 1.0);
    CHECK(span_overlap_f1({{0, 10}}, {{20, 30}}) == 0.0);
}

TEST_CASE("identical variant outputs give F1 1.0 and tau 1.0") {
    Trajectory t;
    t.id = "t";
    t.task_text = "task";
    t.trace_text = "first part of the work. second part of the work. third part here.";
    t.domain_tag = DomainTag::kMath;
    const std::string response =
        "(1) subgoal: one\n    skill: s1\n    step: first part of the work.\n"
        "(2) subgoal: two\n    skill: s2\n    step: second part of the work.\n"
        "(3) subgoal: three\n    skill: s3\n    step: third part here.\n";
    auto backend = std::make_shared<MockChatBackend>();
    for (const auto& variant : segmentation_variants(DomainTag::kMath)) {
        const auto prompt = segmentation_prompt(t, variant);
        backend->add_fixture(prompt.system, prompt.user, response);
    }
    VariantScorer scorer = [](const std::vector<SubgoalTriple>& triples) {
        std::vector<int> scores;
        for (std::size_t i = 0; i < triples.size(); ++i) {
            scores.push_back(int(i) % 4);
        }
        return scores;
    };
    const auto report = prompt_variant_agreement(t, {"M1", "M2"}, *backend, scorer);
    REQUIRE(report.pairs.size() == 1);
    CHECK(report.pairs[0].count_agreement == 1.0);
    CHECK(report.pairs[0].span_f1 == 1.0);
    REQUIRE(report.pairs[0].kendall_tau.has_value());
    CHECK(*report.pairs[0].kendall_tau == 1.0);
}

TEST_CASE("a boundary disagreement in one of four spans lowers F1 as the oracle predicts") {
    Trajectory t;
    t.id = "t";
    t.task_text = "task";
    // 4 sentences, 10 chars each segment boundary.
    t.trace_text = "aaaa bbbb. cccc dddd. eeee ffff. gggg hhhh.";
    t.domain_tag = DomainTag::kMath;
    const std::string resp_a =
        "(1) subgoal: one\n    skill: s\n    step: aaaa bbbb.\n"
        "(2) subgoal: two\n    skill: s\n    step: cccc dddd.\n"
        "(3) subgoal: three\n    skill: s\n    step: eeee ffff.\n"
        "(4) subgoal: four\n    skill: s\n    step: gggg hhhh.\n";
    // Variant B merges sentence 3's tail into item 3 differently: one
    // boundary of four moves.
    const std::string resp_b =
        "(1) subgoal: one\n    skill: s\n    step: aaaa bbbb.\n"
        "(2) subgoal: two\n    skill: s\n    step: cccc dddd.\n"
        "(3) subgoal: three\n    skill: s\n    step: eeee ffff. gggg\n"
        "(4) subgoal: four\n    skill: s\n    step: hhhh.\n";
    auto backend = std::make_shared<MockChatBackend>();
    {
        const auto pa = segmentation_prompt(t, "M1");
        backend->add_fixture(pa.system, pa.user, resp_a);
        const auto pb = segmentation_prompt(t, "M2");
        backend->add_fixture(pb.system, pb.user, resp_b);
    }
    const auto report = prompt_variant_agreement(t, {"M1", "M2"}, *backend);
    REQUIRE(report.pairs.size() == 1);

    // Brute-force optimal matching over all pairings of the two span lists.
    const std::vector<StepSpan> spans_a{{0, 10}, {11, 21}, {22, 32}, {33, 43}};
    const std::vector<StepSpan> spans_b{{0, 10}, {11, 21}, {22, 37}, {38, 43}};
    std::vector<std::size_t> perm{0, 1, 2, 3};
    double best_overlap = 0.0;
    do {
        double total = 0.0;
        for (std::size_t i = 0; i < 4; ++i) {
            const auto& x = spans_a[i];
            const auto& y = spans_b[perm[i]];
            const auto lo = std::max(x.start, y.start);
            const auto hi = std::min(x.end, y.end);
            if (hi > lo) total += double(hi - lo);
        }
        best_overlap = std::max(best_overlap, total);
    } while (std::next_permutation(perm.begin(), perm.end()));
    double len_a = 0.0, len_b = 0.0;
    for (const auto& s : spans_a) len_a += double(s.end - s.start);
    for (const auto& s : spans_b) len_b += double(s.end - s.start);
    const double precision = best_overlap / len_b;
    const double recall = best_overlap / len_a;
    const double expected_f1 = 2.0 * precision * recall / (precision + recall);

    CHECK(report.pairs[0].span_f1 == doctest::Approx(expected_f1).epsilon(1e-12));
    CHECK(report.pairs[0].span_f1 < 1.0);
}

TEST_CASE("variant agreement needs at least two variants") {
    Trajectory t;
    t.id = "t";
    t.task_text = "task";
    t.trace_text = "text.";
    auto backend = std::make_shared<MockChatBackend>();
    CHECK_THROWS_AS(prompt_variant_agreement(t, {"M1"}, *backend), std::invalid_argument);
}
