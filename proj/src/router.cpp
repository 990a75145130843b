#include "scribe/router.hpp"

#include <algorithm>
#include <cctype>
#include <map>
#include <sstream>

#include "scribe/errors.hpp"
#include "scribe/prompts.hpp"
#include "scribe/vecmath.hpp"

namespace scribe {

namespace {

std::string trim(const std::string& s) {
    const auto first = s.find_first_not_of(" \t\r\n");
    if (first == std::string::npos) {
        return {};
    }
    const auto last = s.find_last_not_of(" \t\r\n");
    return s.substr(first, last - first + 1);
}

std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(),
                   [](unsigned char c) { return char(std::tolower(c)); });
    return s;
}

// Strips an optional "(n)" prefix, then matches "key:" case-insensitively.
// Returns the content after the colon, or nullopt.
std::optional<std::string> match_field(const std::string& line, const char* key) {
    std::size_t i = line.find_first_not_of(" \t");
    if (i == std::string::npos) {
        return std::nullopt;
    }
    if (line[i] == '(') {
        const auto close = line.find(')', i);
        if (close == std::string::npos) {
            return std::nullopt;
        }
        for (std::size_t k = i + 1; k < close; ++k) {
            if (!std::isdigit(static_cast<unsigned char>(line[k]))) {
                return std::nullopt;
            }
        }
        i = line.find_first_not_of(" \t", close + 1);
        if (i == std::string::npos) {
            return std::nullopt;
        }
    }
    const std::string key_str = std::string(key) + ":";
    if (lower(line.substr(i, key_str.size())) != key_str) {
        return std::nullopt;
    }
    return trim(line.substr(i + key_str.size()));
}

std::vector<std::string> split_words(const std::string& text) {
    std::vector<std::string> words;
    std::istringstream in(text);
    std::string w;
    while (in >> w) {
        words.push_back(lower(w));
    }
    return words;
}

}  // namespace

std::vector<SegmentItem> parse_segmentation_response(const std::string& response) {
    std::vector<SegmentItem> items;
    std::istringstream in(response);
    std::string line;
    bool in_step = false;
    while (std::getline(in, line)) {
        if (auto subgoal = match_field(line, "subgoal")) {
            items.push_back({*subgoal, "", ""});
            in_step = false;
            continue;
        }
        if (items.empty()) {
            continue;
        }
        if (auto skill = match_field(line, "skill")) {
            items.back().skill = *skill;
            in_step = false;
            continue;
        }
        if (auto step = match_field(line, "step")) {
            items.back().step = *step;
            in_step = true;
            continue;
        }
        if (in_step) {
            // Multi-line step content continues until the next field marker.
            items.back().step += "\n" + line;
        }
    }
    for (auto& item : items) {
        item.step = trim(item.step);
    }
    // Drop items missing any component rather than failing the whole parse.
    std::vector<SegmentItem> complete;
    for (auto& item : items) {
        if (!item.subgoal.empty() && !item.skill.empty() && !item.step.empty()) {
            complete.push_back(std::move(item));
        }
    }
    return complete;
}

StepSpan resolve_span(const std::string& trace_text, const std::string& step_text,
                      std::size_t search_from, double overlap_threshold) {
    const std::string step = trim(step_text);
    if (step.empty()) {
        throw ParseError("resolve_span: empty step text");
    }

    const auto exact = trace_text.find(step, search_from);
    if (exact != std::string::npos) {
        return {exact, exact + step.size()};
    }

    // Word-overlap fallback: slide a window with the step's word count over
    // the remaining trace and keep the best bag-of-words match.
    const auto step_words = split_words(step);
    if (step_words.empty()) {
        throw ScribeError("span resolution failed: step text has no words");
    }

    struct Token {
        std::string word;
        std::size_t begin;
        std::size_t end;
    };
    std::vector<Token> tokens;
    std::size_t i = search_from;
    while (i < trace_text.size()) {
        while (i < trace_text.size() && std::isspace(static_cast<unsigned char>(trace_text[i]))) {
            ++i;
        }
        std::size_t j = i;
        while (j < trace_text.size() && !std::isspace(static_cast<unsigned char>(trace_text[j]))) {
            ++j;
        }
        if (j > i) {
            tokens.push_back({lower(trace_text.substr(i, j - i)), i, j});
        }
        i = j;
    }

    const std::size_t w = step_words.size();
    double best_score = -1.0;
    std::size_t best_idx = 0;
    if (tokens.size() >= w) {
        auto sorted_step = step_words;
        std::sort(sorted_step.begin(), sorted_step.end());
        for (std::size_t start = 0; start + w <= tokens.size(); ++start) {
            std::vector<std::string> window;
            window.reserve(w);
            for (std::size_t k = 0; k < w; ++k) {
                window.push_back(tokens[start + k].word);
            }
            std::sort(window.begin(), window.end());
            std::vector<std::string> common;
            std::set_intersection(window.begin(), window.end(), sorted_step.begin(),
                                  sorted_step.end(), std::back_inserter(common));
            const double score = double(common.size()) / double(w);
            if (score > best_score) {
                best_score = score;
                best_idx = start;
            }
        }
    }
    if (best_score >= overlap_threshold) {
        return {tokens[best_idx].begin, tokens[best_idx + w - 1].end};
    }

    std::string preview = step.substr(0, 60);
    throw ScribeError("span resolution failed: step text \"" + preview +
                      (step.size() > 60 ? "..." : "") + "\" not found with overlap >= " +
                      std::to_string(overlap_threshold));
}

std::vector<SubgoalTriple> segment_trajectory(const Trajectory& trajectory, ChatBackend& backend,
                                              const SegmentOptions& options) {
    if (trajectory.trace_text.empty()) {
        throw std::invalid_argument("segment_trajectory: trace_text is empty");
    }
    const std::string variant =
        options.variant_id.empty() ? default_variant(trajectory.domain_tag) : options.variant_id;
    const PromptPair prompt = segmentation_prompt(trajectory, variant);

    std::vector<SegmentItem> items;
    std::string failure = "no subgoal items parsed";
    for (int attempt = 0; attempt <= options.max_reprompts; ++attempt) {
        ChatRequest req;
        req.system_prompt = prompt.system;
        req.user_prompt = prompt.user;
        if (attempt > 0) {
            req.user_prompt += "\n\nThe previous response could not be parsed (" + failure +
                               "). Use the exact \"(n) subgoal / skill / step\" format.";
        }
        items = parse_segmentation_response(backend.chat(req));
        if (!items.empty()) {
            break;
        }
    }
    if (items.empty()) {
        throw ParseError("segment_trajectory: " + failure + " after " +
                         std::to_string(options.max_reprompts) + " reprompts");
    }

    std::vector<SubgoalTriple> triples;
    std::size_t cursor = 0;
    for (const auto& item : items) {
        SubgoalTriple t;
        t.subgoal = item.subgoal;
        t.skill = item.skill;
        t.span = resolve_span(trajectory.trace_text, item.step, cursor, options.overlap_threshold);
        cursor = t.span.end;
        triples.push_back(std::move(t));
    }

    Trajectory check = trajectory;
    check.triples = triples;
    const auto report = validate_triples(check, ValidationMode::kNonOverlapOnly);
    if (!report.ok()) {
        throw ScribeError("segment_trajectory: resolved spans violate non-overlap: " +
                          report.violations.front().message);
    }
    return triples;
}

RoutingResult route_subgoals(const std::string& trajectory_id,
                             const std::vector<SubgoalTriple>& triples,
                             const PrototypeLibrary& library, EmbedBackend& backend) {
    if (library.prototypes.empty() || library.centroids.empty()) {
        throw std::invalid_argument("route_subgoals: prototype library is empty");
    }

    RoutingResult result;
    result.trajectory_id = trajectory_id;
    result.triples = triples;
    if (triples.empty()) {
        return result;
    }

    std::vector<std::string> texts;
    texts.reserve(triples.size());
    for (const auto& t : triples) {
        texts.push_back(skill_text(t));
    }
    const auto embeddings = backend.embed(texts);

    for (std::size_t i = 0; i < triples.size(); ++i) {
        int best_id = -1;
        double best_sim = -2.0;
        for (const auto& [id, centroid] : library.centroids) {
            const double sim = cosine_similarity(embeddings[i].values, centroid.values);
            if (sim > best_sim) {  // ties keep the earlier (smaller) id
                best_sim = sim;
                best_id = id;
            }
        }
        result.triples[i].prototype_id = best_id;
        result.retrieval_scores.push_back(best_sim);
    }
    return result;
}

std::string normalize_skill_label(const std::string& s) {
    std::string out;
    bool in_space = true;
    for (char c : s) {
        if (std::isspace(static_cast<unsigned char>(c))) {
            if (!in_space && !out.empty()) {
                out.push_back(' ');
            }
            in_space = true;
        } else {
            out.push_back(char(std::tolower(static_cast<unsigned char>(c))));
            in_space = false;
        }
    }
    while (!out.empty() && out.back() == ' ') {
        out.pop_back();
    }
    return out;
}

RouterEvalReport evaluate_router(const std::vector<Trajectory>& predictions,
                                 const std::vector<Trajectory>& gold) {
    std::map<std::string, const Trajectory*> pred_index;
    for (const auto& p : predictions) {
        pred_index[p.id] = &p;
    }
    if (pred_index.size() != predictions.size()) {
        throw ValidationError("evaluate_router: duplicate prediction ids");
    }
    if (predictions.size() != gold.size()) {
        throw ValidationError("evaluate_router: prediction/gold id mismatch (counts differ)");
    }

    RouterEvalReport report;
    for (const auto& g : gold) {
        auto it = pred_index.find(g.id);
        if (it == pred_index.end()) {
            throw ValidationError("evaluate_router: no prediction for trajectory id " + g.id);
        }
        const auto& pred = it->second->triples;
        const auto& gt = g.triples;
        const std::size_t n = std::max(pred.size(), gt.size());
        for (std::size_t i = 0; i < n; ++i) {
            RouterItemEval item;
            item.trajectory_id = g.id;
            item.triple_index = i;
            if (i < pred.size() && i < gt.size()) {
                item.span_match = pred[i].span == gt[i].span;
                item.skill_match =
                    normalize_skill_label(pred[i].skill) == normalize_skill_label(gt[i].skill);
                if (pred[i].prototype_id.has_value() && gt[i].prototype_id.has_value()) {
                    item.proto_match = *pred[i].prototype_id == *gt[i].prototype_id;
                } else {
                    item.proto_match =
                        !pred[i].prototype_id.has_value() && !gt[i].prototype_id.has_value();
                }
            }
            report.per_item.push_back(item);
        }
    }

    if (report.per_item.empty()) {
        report.span_em = report.skill_accuracy = report.prototype_retrieval_accuracy = 1.0;
        return report;
    }
    double span = 0.0, skill = 0.0, proto = 0.0;
    for (const auto& item : report.per_item) {
        span += item.span_match ? 1.0 : 0.0;
        skill += item.skill_match ? 1.0 : 0.0;
        proto += item.proto_match ? 1.0 : 0.0;
    }
    const double n = double(report.per_item.size());
    report.span_em = span / n;
    report.skill_accuracy = skill / n;
    report.prototype_retrieval_accuracy = proto / n;
    return report;
}

}  // namespace scribe
