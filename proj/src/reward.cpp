#include "scribe/reward.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <sstream>

#include "scribe/errors.hpp"
#include "scribe/prompts.hpp"
#include "scribe/router.hpp"

namespace scribe {

using nlohmann::json;

void CalibrationTable::set(int prototype_id, int raw_score, Entry entry) {
    entries_[{prototype_id, raw_score}] = entry;
}

const CalibrationTable::Entry* CalibrationTable::find(int prototype_id, int raw_score) const {
    auto it = entries_.find({prototype_id, raw_score});
    return it == entries_.end() ? nullptr : &it->second;
}

double CalibrationTable::lookup(int prototype_id, int raw_score) const {
    const Entry* e = find(prototype_id, raw_score);
    return e ? e->calibrated : double(raw_score);
}

bool CalibrationTable::monotone() const {
    for (const auto& [key, entry] : entries_) {
        const Entry* next = find(key.first, key.second + 1);
        if (next && entry.calibrated > next->calibrated) {
            return false;
        }
    }
    return true;
}

json calibration_to_json(const CalibrationTable& table) {
    json entries = json::array();
    for (const auto& [key, e] : table.entries()) {
        entries.push_back({{"prototype_id", key.first},
                           {"raw_score", key.second},
                           {"calibrated", e.calibrated},
                           {"support", e.support},
                           {"success_rate", e.success_rate}});
    }
    return json{{"min_support", table.min_support()}, {"entries", entries}};
}

CalibrationTable calibration_from_json(const json& j) {
    CalibrationTable table;
    table.set_min_support(j.at("min_support").get<int>());
    for (const auto& e : j.at("entries")) {
        CalibrationTable::Entry entry;
        entry.calibrated = e.at("calibrated").get<double>();
        entry.support = e.at("support").get<int>();
        entry.success_rate = e.at("success_rate").get<double>();
        table.set(e.at("prototype_id").get<int>(), e.at("raw_score").get<int>(), entry);
    }
    return table;
}

void save_calibration(const CalibrationTable& table, const std::filesystem::path& path) {
    write_file_atomic(path, calibration_to_json(table).dump(2) + "\n");
}

CalibrationTable load_calibration(const std::filesystem::path& path) {
    try {
        return calibration_from_json(json::parse(read_file(path)));
    } catch (const json::exception& e) {
        throw ParseError("calibration table " + path.string() + ": " + e.what());
    }
}

std::optional<JudgeParse> parse_judge_response(const std::string& response) {
    std::string lower = response;
    std::transform(lower.begin(), lower.end(), lower.begin(),
                   [](unsigned char c) { return char(std::tolower(c)); });

    std::size_t pos = lower.find("score");
    std::size_t digit_pos = std::string::npos;
    if (pos != std::string::npos) {
        for (std::size_t i = pos; i < lower.size(); ++i) {
            if (std::isdigit(static_cast<unsigned char>(lower[i])) ||
                (lower[i] == '-' && i + 1 < lower.size() &&
                 std::isdigit(static_cast<unsigned char>(lower[i + 1])))) {
                digit_pos = i;
                break;
            }
        }
    }
    if (digit_pos == std::string::npos) {
        for (std::size_t i = 0; i < lower.size(); ++i) {
            if (std::isdigit(static_cast<unsigned char>(lower[i])) ||
                (lower[i] == '-' && i + 1 < lower.size() &&
                 std::isdigit(static_cast<unsigned char>(lower[i + 1])))) {
                digit_pos = i;
                break;
            }
        }
    }
    if (digit_pos == std::string::npos) {
        return std::nullopt;
    }

    JudgeParse parsed;
    parsed.score = std::stoi(response.substr(digit_pos));

    const std::size_t rat = lower.find("rationale");
    if (rat != std::string::npos) {
        std::size_t start = response.find(':', rat);
        start = start == std::string::npos ? rat + 9 : start + 1;
        std::string tail = response.substr(start);
        const auto first = tail.find_first_not_of(" \t\r\n");
        const auto last = tail.find_last_not_of(" \t\r\n");
        parsed.rationale = first == std::string::npos ? "" : tail.substr(first, last - first + 1);
    } else {
        parsed.rationale = response;
    }
    return parsed;
}

SubgoalScore judge_subgoal(const SubgoalTriple& triple, const SkillPrototype& prototype,
                           const Trajectory& context, ChatBackend& backend,
                           std::size_t triple_index, int max_reprompts) {
    if (!triple.prototype_id.has_value() || *triple.prototype_id != prototype.id) {
        throw std::invalid_argument("judge_subgoal: triple is not routed to prototype " +
                                    std::to_string(prototype.id));
    }
    if (triple.span.end > context.trace_text.size() || triple.span.start >= triple.span.end) {
        throw std::invalid_argument("judge_subgoal: triple span out of range for context trace");
    }
    const std::string step_text =
        context.trace_text.substr(triple.span.start, triple.span.end - triple.span.start);

    const PromptPair prompt = judge_prompt(rubric_block(prototype), triple.subgoal, step_text);
    std::string failure;
    for (int attempt = 0; attempt <= max_reprompts; ++attempt) {
        ChatRequest req;
        req.system_prompt = prompt.system;
        req.user_prompt = prompt.user;
        if (attempt > 0) {
            req.user_prompt += "\n\nThe previous response was invalid (" + failure +
                               "). Respond with \"score: <integer 0-3>\" and a rationale line.";
        }
        const std::string response = backend.chat(req);
        const auto parsed = parse_judge_response(response);
        if (!parsed.has_value()) {
            failure = "no integer score found";
            continue;
        }
        if (parsed->score < 0 || parsed->score > 3) {
            failure = "score " + std::to_string(parsed->score) + " outside {0,1,2,3}";
            continue;
        }
        SubgoalScore score;
        score.ref = {context.id, triple_index};
        score.prototype_id = prototype.id;
        score.raw_score = parsed->score;
        score.calibrated = double(parsed->score);
        score.rationale = parsed->rationale;
        return score;
    }
    throw ScribeError("judge_subgoal: " + failure + " after " + std::to_string(max_reprompts) +
                      " reprompt(s)");
}

CalibrationTable build_calibration(const std::vector<SubgoalScore>& scores,
                                   const std::map<std::string, int>& outcomes, int min_support) {
    struct Cell {
        int count = 0;
        int successes = 0;
    };
    std::map<int, std::array<Cell, 4>> cells;
    for (const auto& s : scores) {
        auto it = outcomes.find(s.ref.trajectory_id);
        if (it == outcomes.end()) {
            throw ScribeError("build_calibration: missing outcome for trajectory " +
                              s.ref.trajectory_id);
        }
        if (s.raw_score < 0 || s.raw_score > 3) {
            throw std::invalid_argument("build_calibration: raw score outside {0,1,2,3}");
        }
        auto& cell = cells[s.prototype_id][s.raw_score];
        ++cell.count;
        cell.successes += it->second != 0 ? 1 : 0;
    }

    CalibrationTable table;
    table.set_min_support(min_support);
    for (const auto& [proto, levels] : cells) {
        // Pool adjacent eligible levels whose success rates fail to increase;
        // a pooled block's calibrated value is the support-weighted mean of
        // its raw scores. Ineligible levels break runs and keep raw, which
        // keeps the whole column monotone.
        struct Block {
            int first_level;
            int last_level;
            int count;
            int successes;
            double weighted_raw;
        };
        std::vector<double> calibrated(4);
        for (int lvl = 0; lvl < 4; ++lvl) {
            calibrated[lvl] = double(lvl);
        }

        std::vector<Block> run;
        auto flush_run = [&]() {
            for (const auto& b : run) {
                const double value = b.weighted_raw / double(b.count);
                for (int lvl = b.first_level; lvl <= b.last_level; ++lvl) {
                    calibrated[lvl] = value;
                }
            }
            run.clear();
        };
        for (int lvl = 0; lvl < 4; ++lvl) {
            const Cell& cell = levels[lvl];
            const bool eligible = cell.count >= min_support && cell.count > 0;
            if (!eligible) {
                flush_run();
                continue;
            }
            run.push_back({lvl, lvl, cell.count, cell.successes, double(lvl) * cell.count});
            while (run.size() >= 2) {
                const Block& prev = run[run.size() - 2];
                const Block& last = run.back();
                const double prev_rate = double(prev.successes) / double(prev.count);
                const double last_rate = double(last.successes) / double(last.count);
                if (prev_rate < last_rate) {
                    break;
                }
                Block merged{prev.first_level, last.last_level, prev.count + last.count,
                             prev.successes + last.successes,
                             prev.weighted_raw + last.weighted_raw};
                run.pop_back();
                run.back() = merged;
            }
        }
        flush_run();

        for (int lvl = 0; lvl < 4; ++lvl) {
            CalibrationTable::Entry entry;
            entry.calibrated = calibrated[lvl];
            entry.support = levels[lvl].count;
            entry.success_rate = levels[lvl].count > 0
                                     ? double(levels[lvl].successes) / double(levels[lvl].count)
                                     : 0.0;
            table.set(proto, lvl, entry);
        }
    }
    return table;
}

double process_reward(const std::vector<SubgoalScore>& scores, const CalibrationTable& table,
                      const std::vector<double>& weights) {
    if (scores.empty()) {
        throw std::invalid_argument("process_reward: empty score list");
    }
    if (!weights.empty() && weights.size() != scores.size()) {
        throw std::invalid_argument("process_reward: weights size must match scores");
    }
    double weighted = 0.0;
    double total = 0.0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        const double w = weights.empty() ? 1.0 : weights[i];
        if (w < 0.0) {
            throw std::invalid_argument("process_reward: weights must be non-negative");
        }
        const double calibrated = table.lookup(scores[i].prototype_id, scores[i].raw_score);
        weighted += w * (calibrated / 3.0);
        total += w;
    }
    if (total <= 0.0) {
        throw std::invalid_argument("process_reward: total weight must be positive");
    }
    return weighted / total;
}

RewardRecord compose_reward(const std::string& trajectory_id, double process, double outcome,
                            double w_p) {
    if (process < 0.0 || process > 1.0 || outcome < 0.0 || outcome > 1.0 || w_p < 0.0 ||
        w_p > 1.0) {
        throw std::invalid_argument("compose_reward: process, outcome and w_p must lie in [0,1]");
    }
    RewardRecord r;
    r.trajectory_id = trajectory_id;
    r.process_reward = process;
    r.outcome_reward = outcome;
    r.w_p = w_p;
    r.composite = w_p * process + (1.0 - w_p) * outcome;
    return r;
}

std::vector<double> group_advantages(const std::vector<double>& rewards, double eps) {
    if (rewards.size() < 2) {
        throw std::invalid_argument("group_advantages: need a group of at least 2 rewards");
    }
    const double n = double(rewards.size());
    double mean = 0.0;
    for (double r : rewards) {
        mean += r;
    }
    mean /= n;

    const auto [mn, mx] = std::minmax_element(rewards.begin(), rewards.end());
    if (*mn == *mx) {
        return std::vector<double>(rewards.size(), 0.0);
    }

    double var = 0.0;
    for (double r : rewards) {
        var += (r - mean) * (r - mean);
    }
    const double std_dev = std::sqrt(var / n);

    std::vector<double> out(rewards.size());
    for (std::size_t i = 0; i < rewards.size(); ++i) {
        out[i] = (rewards[i] - mean) / (std_dev + eps);
    }
    return out;
}

json advantage_group_to_json(const AdvantageGroup& group) {
    return json{{"group_id", group.group_id},
                {"trajectory_ids", group.trajectory_ids},
                {"rewards", group.rewards},
                {"advantages", group.advantages},
                {"kl_coeff", group.kl_coeff},
                {"entropy_coeff", group.entropy_coeff}};
}

int DriftReport::drift_count() const {
    int n = 0;
    for (const auto& e : entries) {
        n += e.drifting ? 1 : 0;
    }
    return n;
}

namespace {

int modal_score(const std::vector<int>& scores) {
    int counts[4] = {0, 0, 0, 0};
    for (int s : scores) {
        if (s >= 0 && s <= 3) {
            ++counts[s];
        }
    }
    int best = 0;
    for (int s = 1; s <= 3; ++s) {
        if (counts[s] > counts[best]) {
            best = s;
        }
    }
    return best;
}

}  // namespace

DriftReport check_anchors(AnchorSet& anchors, const PrototypeLibrary& library,
                          ChatBackend& backend, const std::string& checkpoint_label,
                          int evals_per_anchor) {
    if (anchors.anchors.empty()) {
        throw std::invalid_argument("check_anchors: anchor set is empty");
    }
    if (anchors.history.size() < anchors.anchors.size()) {
        anchors.history.resize(anchors.anchors.size());
    }

    DriftReport report;
    report.checkpoint = checkpoint_label;
    for (std::size_t i = 0; i < anchors.anchors.size(); ++i) {
        const Anchor& anchor = anchors.anchors[i];
        auto proto_it = library.prototypes.find(anchor.prototype_id);
        if (proto_it == library.prototypes.end()) {
            throw std::invalid_argument("check_anchors: anchor " + std::to_string(i) +
                                        " references unknown prototype " +
                                        std::to_string(anchor.prototype_id));
        }

        Trajectory context;
        context.id = "anchor:" + std::to_string(i);
        context.trace_text = anchor.subgoal;
        SubgoalTriple triple;
        triple.subgoal = anchor.subgoal;
        triple.skill = proto_it->second.skill_name;
        triple.span = {0, context.trace_text.size()};
        triple.prototype_id = anchor.prototype_id;

        std::vector<int> scores;
        scores.reserve(evals_per_anchor);
        for (int e = 0; e < evals_per_anchor; ++e) {
            scores.push_back(
                judge_subgoal(triple, proto_it->second, context, backend, 0).raw_score);
        }

        DriftEntry entry;
        entry.anchor_index = i;
        entry.scores = scores;
        entry.modal = modal_score(scores);

        const bool batch_consistent =
            std::all_of(scores.begin(), scores.end(), [&](int s) { return s == scores.front(); });
        if (!batch_consistent) {
            entry.drifting = true;
            entry.reason = "scores disagree within checkpoint";
        } else if (!anchors.history[i].empty() &&
                   anchors.history[i].front().modal != entry.modal) {
            entry.drifting = true;
            entry.reason = "modal score moved from " +
                           std::to_string(anchors.history[i].front().modal) + " to " +
                           std::to_string(entry.modal);
        }
        anchors.history[i].push_back({checkpoint_label, scores, entry.modal});
        report.entries.push_back(std::move(entry));
    }
    return report;
}

namespace {

struct SpanMatch {
    std::size_t a;
    std::size_t b;
    std::size_t overlap;
};

std::vector<SpanMatch> greedy_overlap_matching(const std::vector<StepSpan>& a,
                                               const std::vector<StepSpan>& b) {
    std::vector<SpanMatch> candidates;
    for (std::size_t i = 0; i < a.size(); ++i) {
        for (std::size_t j = 0; j < b.size(); ++j) {
            const std::size_t lo = std::max(a[i].start, b[j].start);
            const std::size_t hi = std::min(a[i].end, b[j].end);
            if (hi > lo) {
                candidates.push_back({i, j, hi - lo});
            }
        }
    }
    std::sort(candidates.begin(), candidates.end(), [](const SpanMatch& x, const SpanMatch& y) {
        if (x.overlap != y.overlap) return x.overlap > y.overlap;
        if (x.a != y.a) return x.a < y.a;
        return x.b < y.b;
    });
    std::vector<bool> used_a(a.size(), false), used_b(b.size(), false);
    std::vector<SpanMatch> matches;
    for (const auto& c : candidates) {
        if (!used_a[c.a] && !used_b[c.b]) {
            used_a[c.a] = true;
            used_b[c.b] = true;
            matches.push_back(c);
        }
    }
    return matches;
}

}  // namespace

double span_overlap_f1(const std::vector<StepSpan>& a, const std::vector<StepSpan>& b) {
    if (a.empty() && b.empty()) {
        return 1.0;
    }
    if (a.empty() || b.empty()) {
        return 0.0;
    }
    std::size_t total_overlap = 0;
    for (const auto& m : greedy_overlap_matching(a, b)) {
        total_overlap += m.overlap;
    }
    std::size_t len_a = 0, len_b = 0;
    for (const auto& s : a) len_a += s.end - s.start;
    for (const auto& s : b) len_b += s.end - s.start;
    if (total_overlap == 0 || len_a == 0 || len_b == 0) {
        return 0.0;
    }
    const double precision = double(total_overlap) / double(len_b);
    const double recall = double(total_overlap) / double(len_a);
    return 2.0 * precision * recall / (precision + recall);
}

double kendall_tau(const std::vector<int>& a, const std::vector<int>& b) {
    if (a.size() != b.size()) {
        throw std::invalid_argument("kendall_tau: sequences must have equal length");
    }
    const std::size_t n = a.size();
    if (n < 2) {
        return 1.0;
    }
    long concordant = 0, discordant = 0;
    bool any_untied = false;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            const int da = a[i] - a[j];
            const int db = b[i] - b[j];
            if (da != 0 || db != 0) {
                any_untied = true;
            }
            if (da * db > 0) ++concordant;
            if (da * db < 0) ++discordant;
        }
    }
    if (!any_untied) {
        return 1.0;  // both sequences constant: perfect agreement by convention
    }
    const double total = double(n) * double(n - 1) / 2.0;
    return double(concordant - discordant) / total;
}

AgreementReport prompt_variant_agreement(const Trajectory& trajectory,
                                         const std::vector<std::string>& variant_ids,
                                         ChatBackend& backend, const VariantScorer& scorer) {
    if (variant_ids.size() < 2) {
        throw std::invalid_argument("prompt_variant_agreement: need at least two variants");
    }

    std::vector<std::vector<SubgoalTriple>> segmentations;
    for (const auto& variant : variant_ids) {
        SegmentOptions opts;
        opts.variant_id = variant;
        segmentations.push_back(segment_trajectory(trajectory, backend, opts));
    }
    std::vector<std::vector<int>> score_seqs;
    if (scorer) {
        for (const auto& seg : segmentations) {
            score_seqs.push_back(scorer(seg));
        }
    }

    AgreementReport report;
    double sum_count = 0.0, sum_f1 = 0.0, sum_tau = 0.0;
    for (std::size_t i = 0; i < variant_ids.size(); ++i) {
        for (std::size_t j = i + 1; j < variant_ids.size(); ++j) {
            VariantPairAgreement pair;
            pair.variant_a = variant_ids[i];
            pair.variant_b = variant_ids[j];

            const std::size_t ca = segmentations[i].size();
            const std::size_t cb = segmentations[j].size();
            if (ca == 0 && cb == 0) {
                pair.count_agreement = 1.0;
            } else {
                pair.count_agreement = double(std::min(ca, cb)) / double(std::max(ca, cb));
            }

            std::vector<StepSpan> spans_a, spans_b;
            for (const auto& t : segmentations[i]) spans_a.push_back(t.span);
            for (const auto& t : segmentations[j]) spans_b.push_back(t.span);
            pair.span_f1 = span_overlap_f1(spans_a, spans_b);

            if (scorer) {
                const auto matches = greedy_overlap_matching(spans_a, spans_b);
                std::vector<int> sa, sb;
                for (const auto& m : matches) {
                    sa.push_back(score_seqs[i][m.a]);
                    sb.push_back(score_seqs[j][m.b]);
                }
                pair.kendall_tau = kendall_tau(sa, sb);
                sum_tau += *pair.kendall_tau;
            }

            sum_count += pair.count_agreement;
            sum_f1 += pair.span_f1;
            report.pairs.push_back(std::move(pair));
        }
    }
    const double n_pairs = double(report.pairs.size());
    report.mean_count_agreement = sum_count / n_pairs;
    report.mean_span_f1 = sum_f1 / n_pairs;
    if (scorer) {
        report.mean_kendall_tau = sum_tau / n_pairs;
    }
    return report;
}

}  // namespace scribe
