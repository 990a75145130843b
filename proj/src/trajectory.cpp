#include "scribe/trajectory.hpp"

#include <unistd.h>

#include <algorithm>
#include <fstream>
#include <numeric>
#include <sstream>

#include "scribe/errors.hpp"

namespace scribe {

using nlohmann::json;

std::string to_string(DomainTag tag) {
    return tag == DomainTag::kMath ? "math" : "tool_use";
}

DomainTag domain_tag_from_string(const std::string& s) {
    if (s == "math") {
        return DomainTag::kMath;
    }
    if (s == "tool_use") {
        return DomainTag::kToolUse;
    }
    throw ParseError("unknown domain_tag \"" + s + "\" (expected \"math\" or \"tool_use\")");
}

ValidationReport validate_triples(const Trajectory& trajectory, ValidationMode mode) {
    ValidationReport report;
    const std::size_t text_len = trajectory.trace_text.size();
    const auto& triples = trajectory.triples;

    for (std::size_t i = 0; i < triples.size(); ++i) {
        const StepSpan& s = triples[i].span;
        if (s.start >= s.end) {
            std::ostringstream msg;
            msg << "triple " << i << " has empty or inverted span [" << s.start << "," << s.end << ")";
            report.violations.push_back({msg.str(), {i}});
        }
        if (s.end > text_len) {
            std::ostringstream msg;
            msg << "triple " << i << " span end " << s.end << " exceeds trace length " << text_len;
            report.violations.push_back({msg.str(), {i}});
        }
    }

    for (std::size_t i = 0; i + 1 < triples.size(); ++i) {
        if (triples[i + 1].span.start < triples[i].span.start) {
            std::ostringstream msg;
            msg << "triples " << i << " and " << i + 1 << " are not sorted by span start";
            report.violations.push_back({msg.str(), {i, i + 1}});
        }
    }

    // Overlap and coverage are checked on the start-sorted order so that a
    // mis-sorted list still yields meaningful overlap diagnostics.
    std::vector<std::size_t> order(triples.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return triples[a].span.start < triples[b].span.start;
    });

    for (std::size_t k = 0; k + 1 < order.size(); ++k) {
        const std::size_t a = order[k];
        const std::size_t b = order[k + 1];
        if (triples[b].span.start < triples[a].span.end) {
            std::ostringstream msg;
            msg << "overlap between triples " << a << " and " << b;
            report.violations.push_back({msg.str(), {a, b}});
        }
    }

    if (mode == ValidationMode::kStrictCoverage) {
        std::size_t cursor = 0;
        for (std::size_t k = 0; k < order.size(); ++k) {
            const StepSpan& s = triples[order[k]].span;
            if (s.start > cursor) {
                std::ostringstream msg;
                msg << "gap [" << cursor << "," << s.start << ") uncovered";
                report.violations.push_back({msg.str(), {order[k]}});
            }
            cursor = std::max(cursor, s.end);
        }
        if (cursor < text_len) {
            std::ostringstream msg;
            msg << "gap [" << cursor << "," << text_len << ") uncovered";
            report.violations.push_back({msg.str(), {}});
        }
    }

    return report;
}

json triple_to_json(const SubgoalTriple& triple) {
    json j;
    j["subgoal"] = triple.subgoal;
    j["skill"] = triple.skill;
    j["span"] = {{"start", triple.span.start}, {"end", triple.span.end}};
    if (triple.prototype_id.has_value()) {
        j["prototype_id"] = *triple.prototype_id;
    }
    return j;
}

SubgoalTriple triple_from_json(const json& j) {
    SubgoalTriple t;
    t.subgoal = j.at("subgoal").get<std::string>();
    t.skill = j.at("skill").get<std::string>();
    if (t.subgoal.empty() || t.skill.empty()) {
        throw ParseError("triple subgoal and skill must be non-empty");
    }
    const json& span = j.at("span");
    t.span.start = span.at("start").get<std::size_t>();
    t.span.end = span.at("end").get<std::size_t>();
    if (j.contains("prototype_id") && !j["prototype_id"].is_null()) {
        t.prototype_id = j["prototype_id"].get<int>();
    }
    return t;
}

json trajectory_to_json(const Trajectory& trajectory) {
    json j;
    j["id"] = trajectory.id;
    j["task_text"] = trajectory.task_text;
    j["trace_text"] = trajectory.trace_text;
    j["domain_tag"] = to_string(trajectory.domain_tag);
    if (trajectory.outcome.has_value()) {
        j["outcome"] = *trajectory.outcome;
    }
    json triples = json::array();
    for (const auto& t : trajectory.triples) {
        triples.push_back(triple_to_json(t));
    }
    j["triples"] = std::move(triples);
    return j;
}

Trajectory trajectory_from_json(const json& j) {
    Trajectory t;
    t.id = j.at("id").get<std::string>();
    t.task_text = j.at("task_text").get<std::string>();
    t.trace_text = j.at("trace_text").get<std::string>();
    t.domain_tag = domain_tag_from_string(j.at("domain_tag").get<std::string>());
    if (j.contains("outcome") && !j["outcome"].is_null()) {
        const double o = j["outcome"].get<double>();
        if (o < 0.0 || o > 1.0) {
            throw ParseError("outcome must lie in [0,1]");
        }
        t.outcome = o;
    }
    if (j.contains("triples")) {
        for (const auto& tj : j.at("triples")) {
            t.triples.push_back(triple_from_json(tj));
        }
    }
    return t;
}

std::vector<Trajectory> read_corpus(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open corpus file " + path.string());
    }
    std::vector<Trajectory> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) {
            continue;
        }
        try {
            out.push_back(trajectory_from_json(json::parse(line)));
        } catch (const json::exception& e) {
            throw ParseError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
        } catch (const ParseError& e) {
            throw ParseError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
    return out;
}

void write_corpus(const std::vector<Trajectory>& trajectories, const std::filesystem::path& path) {
    std::vector<std::string> failing;
    for (const auto& t : trajectories) {
        if (!validate_triples(t, ValidationMode::kNonOverlapOnly).ok()) {
            failing.push_back(t.id);
        }
    }
    if (!failing.empty()) {
        std::string ids;
        for (const auto& id : failing) {
            if (!ids.empty()) ids += ", ";
            ids += id;
        }
        throw ValidationError("trajectories fail span validation: " + ids);
    }

    std::string content;
    for (const auto& t : trajectories) {
        content += trajectory_to_json(t).dump();
        content += '\n';
    }
    write_file_atomic(path, content);
}

void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
    namespace fs = std::filesystem;
    const fs::path dir = path.parent_path().empty() ? fs::path(".") : path.parent_path();
    std::error_code ec;
    fs::create_directories(dir, ec);

    const fs::path tmp = dir / (path.filename().string() + ".tmp." + std::to_string(::getpid()));
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) {
            throw IoError("cannot open temp file " + tmp.string());
        }
        out.write(content.data(), std::streamsize(content.size()));
        if (!out) {
            throw IoError("short write to " + tmp.string());
        }
    }
    fs::rename(tmp, path, ec);
    if (ec) {
        fs::remove(tmp);
        throw IoError("cannot rename " + tmp.string() + " to " + path.string() + ": " + ec.message());
    }
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open " + path.string());
    }
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

}  // namespace scribe
