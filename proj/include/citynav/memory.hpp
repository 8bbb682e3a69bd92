#pragma once

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <optional>
#include <regex>
#include <sstream>
#include <string>
#include <unordered_set>
#include <vector>

#include "citynav/env.hpp"
#include "citynav/spatial.hpp"

namespace citynav {

// ---------------------------------------------------------------------------
// Text helpers shared by memory sentences and prompts
// ---------------------------------------------------------------------------

inline std::string number_text(double v) {
    if (v == std::floor(v) && std::abs(v) < 1e15) return std::to_string(std::int64_t(v));
    char buf[32];
    auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, p);
}

inline std::string coord_text(Coord c) { return "(" + number_text(c.x) + ", " + number_text(c.y) + ")"; }

inline std::optional<Coord> parse_coord_text(const std::string& s) {
    static const std::regex re(R"(\(\s*(-?[0-9.]+)\s*,\s*(-?[0-9.]+)\s*\))");
    std::smatch m;
    if (!std::regex_match(s, m, re)) return std::nullopt;
    return Coord{std::stod(m[1]), std::stod(m[2])};
}

inline std::optional<int> octant_from_name(const std::string& word); // defined with the normalizer below

// ---------------------------------------------------------------------------
// Episodic memory
// ---------------------------------------------------------------------------

struct DirectionOption {
    int octant = 0;
    NodeId target = 0;
    Coord target_coord; // agent frame
    bool visited = false;
};

struct EpisodicRecord {
    int t = 0;
    NodeId node = 0;
    Coord coord; // agent frame
    std::vector<DirectionOption> options;
    int action = 0; // octant index, must match one option
    NodeId arrived = 0;
    Coord arrived_coord;
    std::optional<GoalEstimate> estimate;
};

inline std::string render_record(const EpisodicRecord& r) {
    std::ostringstream out;
    out << "You were at " << coord_text(r.coord) << ". You could move to [";
    for (std::size_t i = 0; i < r.options.size(); ++i) {
        if (i) out << ", ";
        out << "'" << kOctantNames[r.options[i].octant] << "'";
    }
    out << "] from there. You chose to move to " << kOctantNames[r.action] << ". You then arrived at "
        << coord_text(r.arrived_coord) << ".";
    return out.str();
}

struct ParsedRecord {
    Coord coord;
    std::vector<int> options;
    int action = 0;
    Coord arrived_coord;
};

inline std::optional<ParsedRecord> parse_record(const std::string& sentence) {
    static const std::regex re(
        R"(You were at (\([^)]*\))\. You could move to \[([^\]]*)\] from there\. You chose to move to (\w+)\. You then arrived at (\([^)]*\))\.)");
    std::smatch m;
    if (!std::regex_search(sentence, m, re)) return std::nullopt;
    ParsedRecord p;
    auto c1 = parse_coord_text(m[1]);
    auto c2 = parse_coord_text(m[4]);
    auto act = octant_from_name(m[3]);
    if (!c1 || !c2 || !act) return std::nullopt;
    p.coord = *c1;
    p.arrived_coord = *c2;
    p.action = *act;
    static const std::regex opt_re(R"('([^']*)')");
    const std::string opts = m[2];
    for (auto it = std::sregex_iterator(opts.begin(), opts.end(), opt_re); it != std::sregex_iterator(); ++it) {
        auto o = octant_from_name((*it)[1]);
        if (!o) return std::nullopt;
        p.options.push_back(*o);
    }
    return p;
}

// ---------------------------------------------------------------------------
// Semantic memory (scripted phase summaries)
// ---------------------------------------------------------------------------

struct SemanticSummary {
    std::string text;
    int from_step = 0;
    int to_step = 0; // inclusive
};

inline constexpr const char* kOctantAdjectives[8] = {"northern",      "northeastern", "eastern",
                                                     "southeastern",  "southern",     "southwestern",
                                                     "western",       "northwestern"};

inline int octant_circular_distance(int a, int b) {
    const int d = std::abs(((a % 8) + 8) % 8 - ((b % 8) + 8) % 8);
    return std::min(d, 8 - d);
}

// Run-length groups of move directions merged into phases while they stay
// within one octant step of the running dominant direction.
inline std::string scripted_summary_text(const std::vector<EpisodicRecord>& records, std::size_t begin,
                                         std::size_t end) {
    struct Phase {
        int counts[8] = {0};
        std::vector<int> first_seen;
        std::size_t from, to;
        int dominant() const {
            int best = first_seen.front();
            for (int o : first_seen)
                if (counts[o] > counts[best]) best = o;
            return best;
        }
        void add(int octant, std::size_t idx) {
            if (counts[octant]++ == 0) first_seen.push_back(octant);
            to = idx;
        }
    };
    std::vector<Phase> phases;
    for (std::size_t i = begin; i < end; ++i) {
        const int o = records[i].action;
        if (!phases.empty() && octant_circular_distance(o, phases.back().dominant()) <= 1) {
            phases.back().add(o, i);
        } else {
            Phase p;
            p.from = i;
            p.add(o, i);
            phases.push_back(std::move(p));
        }
    }
    const auto with_article = [](int octant) {
        const std::string adj = kOctantAdjectives[octant];
        return (adj.front() == 'e' ? "an " : "a ") + adj;
    };
    std::ostringstream out;
    out << "In the past " << (end - begin) << " steps, you primarily moved in "
        << with_article(phases.front().dominant()) << " direction, transitioning from "
        << coord_text(records[phases.front().from].coord) << " to "
        << coord_text(records[phases.front().to].arrived_coord);
    for (std::size_t i = 1; i < phases.size(); ++i) {
        out << ", and then shifted to " << with_article(phases[i].dominant()) << " direction, moving from "
            << coord_text(records[phases[i].from].coord) << " to " << coord_text(records[phases[i].to].arrived_coord);
    }
    out << ".";
    return out.str();
}

// ---------------------------------------------------------------------------
// Working memory
// ---------------------------------------------------------------------------

struct WorkingState {
    bool lost = false;
    GoalEstimate fused; // meaningless when lost
    std::vector<const EpisodicRecord*> retrieved;
    const SemanticSummary* summary = nullptr; // latest, may be null
};

constexpr int kSummaryWindow = 10;

class Memory {
public:
    // t must be 0 for the first record and increase by 1 afterwards; the
    // chosen action must be one of the offered options.
    void record_step(EpisodicRecord r) {
        const int expected = records_.empty() ? 0 : records_.back().t + 1;
        if (r.t != expected) {
            throw ValidationError("non-monotone step " + std::to_string(r.t) + " (expected " +
                                  std::to_string(expected) + ")");
        }
        bool offered = false;
        for (const auto& o : r.options) offered = offered || o.octant == r.action;
        if (!offered) {
            throw ValidationError("action " + std::string(kOctantNames[r.action]) + " not among offered directions");
        }
        visited_.insert(r.node);
        visited_.insert(r.arrived);
        records_.push_back(std::move(r));
    }

    // Fuses on fresh perception, dead-reckons otherwise; with no estimate ever
    // the state is explicitly lost.
    WorkingState reflect(std::optional<GoalEstimate> perceived, Coord current,
                         const std::vector<NodeId>& current_neighbors, int step) {
        WorkingState ws;
        if (perceived) {
            perceived->source = GoalEstimate::Source::perceived;
            perceived->step = step;
            perceived_.push_back(*perceived);
            fused_ = GoalEstimate{fuse_estimates(perceived_), GoalEstimate::Source::fused, step};
            ws.fused = *fused_;
        } else if (fused_) {
            ws.fused = anticipate_goal(fused_->coord, current, step);
        } else {
            ws.lost = true;
        }
        if (!summaries_.empty()) ws.summary = &summaries_.back();
        std::unordered_set<NodeId> nbrs(current_neighbors.begin(), current_neighbors.end());
        for (const auto& r : records_) {
            if (nbrs.count(r.node) || nbrs.count(r.arrived)) ws.retrieved.push_back(&r);
        }
        return ws;
    }

    // Summarizes the next window of records through the reasoner; reasoner
    // failure skips the summary and leaves coverage untouched.
    template <typename Reasoner>
    std::optional<SemanticSummary> summarize(Reasoner&& reasoner, int window = kSummaryWindow) {
        if (int(records_.size()) - summarized_count_ < window) return std::nullopt;
        const std::size_t begin = std::size_t(summarized_count_);
        const std::size_t end = begin + std::size_t(window);
        std::optional<std::string> text;
        try {
            text = reasoner.summarize_records(records_, begin, end);
        } catch (...) {
            text = std::nullopt;
        }
        if (!text) return std::nullopt;
        SemanticSummary s;
        s.text = *text;
        s.from_step = records_[begin].t;
        s.to_step = records_[end - 1].t;
        summaries_.push_back(std::move(s));
        summarized_count_ = int(end);
        return summaries_.back();
    }

    bool has_estimate() const { return fused_.has_value(); }
    const std::optional<GoalEstimate>& fused() const { return fused_; }
    const std::vector<GoalEstimate>& perceived_history() const { return perceived_; }
    const std::vector<EpisodicRecord>& records() const { return records_; }
    const std::vector<SemanticSummary>& summaries() const { return summaries_; }
    const std::unordered_set<NodeId>& visited() const { return visited_; }
    bool is_visited(NodeId id) const { return visited_.count(id) != 0; }
    int summarized_count() const { return summarized_count_; }

private:
    std::vector<EpisodicRecord> records_;
    std::vector<GoalEstimate> perceived_;
    std::optional<GoalEstimate> fused_;
    std::vector<SemanticSummary> summaries_;
    std::unordered_set<NodeId> visited_;
    int summarized_count_ = 0;
};

// A reasoner whose summaries are the deterministic phase descriptions.
struct ScriptedSummarizer {
    std::optional<std::string> summarize_records(const std::vector<EpisodicRecord>& records, std::size_t begin,
                                                 std::size_t end) const {
        return scripted_summary_text(records, begin, end);
    }
};

// ---------------------------------------------------------------------------
// Direction-word normalization
// ---------------------------------------------------------------------------

inline std::optional<int> octant_from_name(const std::string& word) {
    std::string w;
    for (char c : word) {
        if (c == '-' || c == '_' || c == ' ') continue;
        w += char(std::tolower(static_cast<unsigned char>(c)));
    }
    for (int i = 0; i < 8; ++i) {
        if (w == kOctantWords[i]) return i;
    }
    for (int i = 0; i < 8; ++i) {
        std::string abbr = kOctantAbbrev[i];
        for (auto& c : abbr) c = char(std::tolower(static_cast<unsigned char>(c)));
        if (w == abbr) return i;
    }
    return std::nullopt;
}

// First direction word embedded anywhere in free text ("walk('East')",
// "move towards the north-east"); compound words beat their prefixes.
inline std::optional<int> find_direction_word(const std::string& text) {
    std::string lower;
    for (char c : text) lower += (c == '-' || c == '_') ? char(0) : char(std::tolower(static_cast<unsigned char>(c)));
    lower.erase(std::remove(lower.begin(), lower.end(), char(0)), lower.end());
    std::optional<int> dir;
    std::size_t best_pos = std::string::npos, best_len = 0;
    for (int i = 0; i < 8; ++i) {
        const std::string w = kOctantWords[i];
        const std::size_t pos = lower.find(w);
        if (pos == std::string::npos) continue;
        if (pos < best_pos || (pos == best_pos && w.size() > best_len)) {
            best_pos = pos;
            best_len = w.size();
            dir = i;
        }
    }
    return dir;
}

} // namespace citynav
