#pragma once

#include <string>
#include <vector>

#include "scribe/backend.hpp"
#include "scribe/prototype.hpp"
#include "scribe/trajectory.hpp"

namespace scribe {

struct SegmentOptions {
    std::string variant_id;        // empty = domain default prompt
    int max_reprompts = 2;
    double overlap_threshold = 0.6;  // minimum word overlap for fuzzy span resolution
};

// One (subgoal, skill, step) item as returned by the extraction prompt,
// before span resolution.
struct SegmentItem {
    std::string subgoal;
    std::string skill;
    std::string step;
};

// Parses the numbered "(n) subgoal/skill/step" response format.
std::vector<SegmentItem> parse_segmentation_response(const std::string& response);

// Locates step text in the trace: exact substring first (searching past the
// previous span to keep the sequence ordered), then the best word-overlap
// window; below `overlap_threshold` resolution fails.
StepSpan resolve_span(const std::string& trace_text, const std::string& step_text,
                      std::size_t search_from, double overlap_threshold);

std::vector<SubgoalTriple> segment_trajectory(const Trajectory& trajectory, ChatBackend& backend,
                                              const SegmentOptions& options = {});

struct RoutingResult {
    std::string trajectory_id;
    std::vector<SubgoalTriple> triples;      // with prototype_id set
    std::vector<double> retrieval_scores;    // cosine to the chosen centroid
};

// Assigns each triple the prototype with maximal cosine similarity between
// the triple's "subgoal\nskill" embedding and the prototype centroid; ties
// break toward the smaller prototype id.
RoutingResult route_subgoals(const std::string& trajectory_id,
                             const std::vector<SubgoalTriple>& triples,
                             const PrototypeLibrary& library, EmbedBackend& backend);

struct RouterItemEval {
    std::string trajectory_id;
    std::size_t triple_index = 0;
    bool span_match = false;
    bool skill_match = false;
    bool proto_match = false;
};

struct RouterEvalReport {
    double span_em = 0.0;
    double skill_accuracy = 0.0;
    double prototype_retrieval_accuracy = 0.0;
    std::vector<RouterItemEval> per_item;
};

// Span EM requires exact start/end equality; skills compare after case-fold
// and whitespace collapse; prototypes compare by id. Items align by
// trajectory id and position; count mismatches score as misses on every
// metric.
RouterEvalReport evaluate_router(const std::vector<Trajectory>& predictions,
                                 const std::vector<Trajectory>& gold);

std::string normalize_skill_label(const std::string& s);

}  // namespace scribe
