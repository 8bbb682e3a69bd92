#pragma once

#include <map>
#include <memory>
#include <optional>
#include <regex>
#include <sstream>
#include <string>
#include <vector>

#include "citynav/http_client.hpp"
#include "citynav/memory.hpp"
#include "citynav/planner.hpp"
#include "citynav/spatial.hpp"

namespace citynav {

struct ParseError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ReplayMiss : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Chat plumbing
// ---------------------------------------------------------------------------

enum class Role { system, user, assistant };

inline const char* role_name(Role r) {
    switch (r) {
        case Role::system: return "system";
        case Role::user: return "user";
        default: return "assistant";
    }
}

struct ChatTurn {
    Role role = Role::user;
    std::string content;
};

inline const std::string& last_user_content(const std::vector<ChatTurn>& turns) {
    for (auto it = turns.rbegin(); it != turns.rend(); ++it) {
        if (it->role == Role::user) return it->content;
    }
    throw ParseError("no user turn to answer");
}

// ---------------------------------------------------------------------------
// Prompt fragments
// ---------------------------------------------------------------------------

struct ConnectionView {
    int direction = 0;
    Coord coord; // agent frame
    bool visited = false;
};

inline std::string ordinal_word(int n) {
    static const char* words[] = {"first", "second", "third",   "fourth", "fifth",
                                  "sixth", "seventh", "eighth", "ninth",  "tenth"};
    if (n >= 1 && n <= 10) return words[n - 1];
    const int mod100 = n % 100, mod10 = n % 10;
    const char* suffix = "th";
    if (mod100 < 11 || mod100 > 13) {
        if (mod10 == 1) suffix = "st";
        else if (mod10 == 2) suffix = "nd";
        else if (mod10 == 3) suffix = "rd";
    }
    return std::to_string(n) + suffix;
}

// Axis rendering of a goal offset: "South 22 steps" or
// "South 51 steps, East 51 steps" (north/south component first).
inline std::string inference_phrase(Coord delta) {
    if (delta.x == 0.0 && delta.y == 0.0) return "at your current position";
    std::string s = "in ";
    bool first = true;
    if (delta.y != 0.0) {
        s += delta.y > 0.0 ? "North " : "South ";
        s += number_text(std::abs(delta.y)) + " steps";
        first = false;
    }
    if (delta.x != 0.0) {
        if (!first) s += ", ";
        s += delta.x > 0.0 ? "East " : "West ";
        s += number_text(std::abs(delta.x)) + " steps";
    }
    return s;
}

inline std::string direction_list(const std::vector<ConnectionView>& conns) {
    std::string s = "[";
    for (std::size_t i = 0; i < conns.size(); ++i) {
        if (i) s += ", ";
        s += "'";
        s += kOctantNames[conns[i].direction];
        s += "'";
    }
    return s + "]";
}

inline std::string connections_clause(const std::vector<ConnectionView>& conns, bool show_visited) {
    std::string s = "Your current connection includes " + direction_list(conns) + ".";
    for (const auto& c : conns) {
        s += " ";
        s += kOctantNames[c.direction];
        s += " is at " + coord_text(c.coord);
        if (show_visited) s += c.visited ? ", Visited" : ", Unvisited";
        s += ".";
    }
    return s;
}

inline std::string plan_list_text(const std::vector<std::string>& items) {
    std::string s = "[";
    for (std::size_t i = 0; i < items.size(); ++i) {
        if (i) s += ", ";
        s += "'" + items[i] + "'";
    }
    return s + "]";
}

inline std::string goal_coord_clause(Coord goal) {
    return "The goal coordinates are most likely to be " + coord_text(goal) + ".";
}

inline std::string goal_direction_clause(Coord goal, Coord position) {
    const CompassLabel label = classify_direction(goal - position);
    if (label.at_goal) {
        return "The goal " + coord_text(goal) + " is at current position " + coord_text(position) + ".";
    }
    return "The goal " + coord_text(goal) + " is in " + compass_phrase(label) + " from current position " +
           coord_text(position) + ".";
}

// ---------------------------------------------------------------------------
// Prompt templates
// ---------------------------------------------------------------------------

enum class TemplateId {
    perception_qa,
    reflection_summary,
    reflection_fuse,
    planning,
    react,
    cot,
    im,
    progprompt,
    cap,
    deps
};

struct PromptContext {
    // shared scene fields
    Coord position;
    std::vector<ConnectionView> connections;
    bool show_visited = true;
    std::optional<Coord> goal_coord;   // fused goal, agent frame
    std::optional<Coord> instant_delta; // instantaneous/anticipated goal offset
    std::optional<std::string> summary_text;
    std::vector<std::string> plan_items; // remaining plan, already numbered
    bool plan_reflected = true;          // "The plan is" vs "The last plan is"
    std::string plan_code;               // progprompt/cap function body
    std::string planner_line;            // im/deps planner text

    // reflection fields
    std::vector<EpisodicRecord> records; // summary window
    std::vector<Coord> inferences;       // past perceived goal coords, in order

    // perception fields
    std::string landmark_name;
    int perception_stage = 1; // 1 visibility, 2 bounding box, 3 distance
    std::string bbox_text;
};

namespace detail {

inline std::string scene_clause(const PromptContext& ctx) {
    std::string s = "You are now at " + coord_text(ctx.position) + ". ";
    if (ctx.connections.empty()) throw ValidationError("prompt requires at least one connection");
    s += connections_clause(ctx.connections, ctx.show_visited);
    return s;
}

inline std::string goal_clauses(const PromptContext& ctx) {
    std::string s;
    if (ctx.goal_coord) {
        s += " " + goal_coord_clause(*ctx.goal_coord);
        s += " " + goal_direction_clause(*ctx.goal_coord, ctx.position);
    } else if (ctx.instant_delta) {
        s += " Now you infer that the goal is " + inference_phrase(*ctx.instant_delta) + ".";
    }
    return s;
}

inline std::string choose_clause(const PromptContext& ctx) {
    return "choose one in " + direction_list(ctx.connections) + " as your next action.";
}

} // namespace detail

inline std::string render_perception_qa(const PromptContext& ctx) {
    if (ctx.landmark_name.empty()) throw ValidationError("perception prompt requires a landmark name");
    switch (ctx.perception_stage) {
        case 1: return "Is the " + ctx.landmark_name + " visible in the image?";
        case 2:
            return "The " + ctx.landmark_name + " is visible in the image, what's the bounding box of it in the image?";
        case 3:
            if (ctx.bbox_text.empty()) throw ValidationError("distance question requires a bounding box");
            return "The " + ctx.landmark_name + " is visible in the image and its bounding box is " + ctx.bbox_text +
                   ", how far is it actually away from the camera?";
        default: throw ValidationError("perception stage must be 1, 2 or 3");
    }
}

inline std::string render_reflection_summary(const PromptContext& ctx) {
    if (ctx.records.empty()) throw ValidationError("summary prompt requires memory records");
    std::ostringstream out;
    out << "Here is your memory list in time sequence.\n";
    for (std::size_t i = 0; i < ctx.records.size(); ++i) {
        out << (i + 1) << ". " << render_record(ctx.records[i]) << "\n";
    }
    out << "Summarize all your memory, what can you learn from it?";
    return out.str();
}

inline std::string render_reflection_fuse(const PromptContext& ctx) {
    if (ctx.inferences.empty() && !ctx.instant_delta) {
        throw ValidationError("fuse prompt requires at least one inference");
    }
    std::ostringstream out;
    out << "You are now at " << coord_text(ctx.position) << ".";
    for (std::size_t i = 0; i < ctx.inferences.size(); ++i) {
        out << " The " << ordinal_word(int(i) + 1) << " time you inferred the goal was at "
            << coord_text(ctx.inferences[i]) << ".";
    }
    if (ctx.instant_delta) {
        out << " Now you infer that the goal is " << inference_phrase(*ctx.instant_delta) << ".";
    }
    out << " According to all your inferences, what are the goal coordinates most likely to be?"
        << " What is the corresponding goal direction from current position?";
    return out.str();
}

inline std::string render_planning(const PromptContext& ctx) {
    std::string s = detail::scene_clause(ctx);
    s += detail::goal_clauses(ctx);
    if (ctx.summary_text) s += " " + *ctx.summary_text;
    s += " The ";
    s += ctx.plan_reflected ? "plan" : "last plan";
    s += " is " + plan_list_text(ctx.plan_items) + ".";
    s += " Which step of the plan are you currently implementing?";
    s += " According to all information above, should the plan be updated?. If yes, show the new plan.";
    s += " According to your plan and current connection, " + detail::choose_clause(ctx);
    return s;
}

inline std::string render_react(const PromptContext& ctx) {
    std::string s = detail::scene_clause(ctx);
    s += detail::goal_clauses(ctx);
    if (ctx.summary_text) s += " " + *ctx.summary_text;
    s += "\nAccording to all information above, " + detail::choose_clause(ctx);
    return s;
}

inline std::string render_cot(const PromptContext& ctx) {
    std::string s = detail::scene_clause(ctx);
    s += detail::goal_clauses(ctx);
    s += " According to all information above, " + detail::choose_clause(ctx);
    return s;
}

inline std::string render_im(const PromptContext& ctx) {
    if (ctx.planner_line.empty()) throw ValidationError("inner-monologue prompt requires a planner line");
    std::string s = "Scene:\n" + detail::scene_clause(ctx);
    s += detail::goal_clauses(ctx);
    s += "\nPlanner:\n" + ctx.planner_line + "\n";
    s += "According to all information above, should the plan be updated?. If yes, show the new plan.";
    s += " According to your plan and current connection, " + detail::choose_clause(ctx);
    return s;
}

inline std::string render_progprompt(const PromptContext& ctx) {
    if (ctx.plan_code.empty()) throw ValidationError("progprompt requires plan code");
    std::string s = detail::scene_clause(ctx);
    s += detail::goal_clauses(ctx);
    s += " The plan is:\n" + ctx.plan_code + "\n";
    s += "According to all information above, should the plan be updated?. If yes, show the new plan.";
    s += " According to your plan and current connection, " + detail::choose_clause(ctx);
    return s;
}

inline std::string render_cap(const PromptContext& ctx) { return render_progprompt(ctx); }

inline std::string render_deps(const PromptContext& ctx) {
    std::string s = detail::scene_clause(ctx);
    s += "\nPlanner:" + plan_list_text(ctx.plan_items) + "\n";
    s += "According to all information above, should the plan be updated? If yes, show the new plan.";
    s += " According to your plan and current connection, " + detail::choose_clause(ctx);
    return s;
}

inline std::string render_prompt(TemplateId id, const PromptContext& ctx) {
    switch (id) {
        case TemplateId::perception_qa: return render_perception_qa(ctx);
        case TemplateId::reflection_summary: return render_reflection_summary(ctx);
        case TemplateId::reflection_fuse: return render_reflection_fuse(ctx);
        case TemplateId::planning: return render_planning(ctx);
        case TemplateId::react: return render_react(ctx);
        case TemplateId::cot: return render_cot(ctx);
        case TemplateId::im: return render_im(ctx);
        case TemplateId::progprompt: return render_progprompt(ctx);
        case TemplateId::cap: return render_cap(ctx);
        case TemplateId::deps: return render_deps(ctx);
    }
    throw ValidationError("unknown template id");
}

// Pseudocode plan bodies for the program-shaped baselines.
inline std::string progprompt_plan_code(const std::vector<SubGoal>& subgoals) {
    std::ostringstream out;
    out << "def search_goal():";
    for (std::size_t i = 0; i < subgoals.size(); ++i) {
        out << "\n    # " << (i + 1) << ": " << render_subgoal(subgoals[i]);
        out << "\n    walk('" << kOctantNames[subgoals[i].direction] << "')";
    }
    return out.str();
}

inline std::string cap_plan_code(const std::vector<SubGoal>& subgoals) {
    std::ostringstream out;
    out << "def search_goal():";
    for (std::size_t i = 0; i < subgoals.size(); ++i) {
        out << "\n    # step " << (i + 1) << ": " << render_subgoal(subgoals[i]);
        if (subgoals[i].until == Until::intersection) {
            out << "\n    while not get_to('intersection'):";
            out << "\n        walk('" << kOctantNames[subgoals[i].direction] << "')";
        } else {
            out << "\n    walk('" << kOctantNames[subgoals[i].direction] << "')";
        }
    }
    return out.str();
}

// ---------------------------------------------------------------------------
// Decision parsing
// ---------------------------------------------------------------------------

struct ParsedDecision {
    std::optional<int> action;           // octant index
    std::optional<bool> yes_or_no;
    std::vector<std::string> new_plan;   // step strings
    std::optional<std::string> current_state;
    std::map<std::string, std::string> extras;
};

namespace detail {

inline std::string strip_code_fences(const std::string& s) {
    std::string out;
    std::istringstream in(s);
    std::string line;
    while (std::getline(in, line)) {
        std::string trimmed = line;
        const auto b = trimmed.find_first_not_of(" \t");
        if (b != std::string::npos && trimmed.compare(b, 3, "```") == 0) continue;
        out += line;
        out += "\n";
    }
    return out;
}

// Reads a quoted string starting at text[p] (the quote char); handles \escapes
// and embedded newlines. Returns the unescaped content, p past the close.
inline std::optional<std::string> read_quoted(const std::string& text, std::size_t& p) {
    const char q = text[p];
    std::string out;
    for (std::size_t i = p + 1; i < text.size(); ++i) {
        const char c = text[i];
        if (c == '\\' && i + 1 < text.size()) {
            const char n = text[++i];
            if (n == 'n') out += '\n';
            else if (n == 't') out += '\t';
            else out += n;
        } else if (c == q) {
            p = i + 1;
            return out;
        } else {
            out += c;
        }
    }
    return std::nullopt;
}

// Reads a bracketed [...] block starting at text[p]; respects nested brackets
// and quotes. Returns the inner text, p past the close.
inline std::optional<std::string> read_bracketed(const std::string& text, std::size_t& p) {
    int depth = 0;
    std::size_t start = p + 1;
    for (std::size_t i = p; i < text.size(); ++i) {
        const char c = text[i];
        if (c == '\'' || c == '"') {
            std::size_t q = i;
            if (!read_quoted(text, q)) return std::nullopt;
            i = q - 1;
        } else if (c == '[') {
            ++depth;
        } else if (c == ']') {
            if (--depth == 0) {
                p = i + 1;
                return text.substr(start, i - start);
            }
        }
    }
    return std::nullopt;
}

inline std::vector<std::string> list_items(const std::string& inner) {
    std::vector<std::string> items;
    std::size_t p = 0;
    while (p < inner.size()) {
        const char c = inner[p];
        if (c == '\'' || c == '"') {
            auto s = read_quoted(inner, p);
            if (!s) break;
            items.push_back(std::move(*s));
        } else {
            ++p;
        }
    }
    if (items.empty()) {
        std::istringstream in(inner);
        std::string piece;
        while (std::getline(in, piece, ',')) {
            const auto b = piece.find_first_not_of(" \t\n");
            const auto e = piece.find_last_not_of(" \t\n");
            if (b != std::string::npos) items.push_back(piece.substr(b, e - b + 1));
        }
    }
    return items;
}

inline std::string lower_copy(std::string s) {
    for (auto& c : s) c = char(std::tolower(static_cast<unsigned char>(c)));
    return s;
}

} // namespace detail

// Extracts the known decision keys from JSON-ish answer bodies: fenced or
// bare, single or double quoted, prose around them, any key order.
inline ParsedDecision parse_decision(const std::string& raw) {
    const std::string text = detail::strip_code_fences(raw);
    ParsedDecision d;
    bool any = false;
    std::size_t p = 0;
    while (p < text.size()) {
        const char c = text[p];
        if (c != '"' && c != '\'') {
            ++p;
            continue;
        }
        std::size_t q = p;
        auto key = detail::read_quoted(text, q);
        if (!key) break;
        std::size_t after = q;
        while (after < text.size() && (text[after] == ' ' || text[after] == '\t')) ++after;
        if (after >= text.size() || text[after] != ':') {
            p = q;
            continue;
        }
        ++after;
        while (after < text.size() && std::isspace(static_cast<unsigned char>(text[after]))) ++after;
        std::string value;
        std::vector<std::string> value_list;
        bool had_list = false;
        if (after < text.size() && (text[after] == '"' || text[after] == '\'')) {
            auto v = detail::read_quoted(text, after);
            if (!v) break;
            value = std::move(*v);
        } else if (after < text.size() && text[after] == '[') {
            auto v = detail::read_bracketed(text, after);
            if (!v) break;
            value = *v;
            value_list = detail::list_items(*v);
            had_list = true;
        } else {
            const std::size_t eol = text.find('\n', after);
            value = text.substr(after, eol == std::string::npos ? std::string::npos : eol - after);
            after = eol == std::string::npos ? text.size() : eol;
        }
        p = after;

        const std::string k = detail::lower_copy(*key);
        any = true;
        if (k == "action") {
            d.action = find_direction_word(value);
            if (!d.action) d.extras["action"] = value;
        } else if (k == "yes_or_no") {
            const std::string v = detail::lower_copy(value);
            if (v.find("yes") != std::string::npos) d.yes_or_no = true;
            else if (v.find("no") != std::string::npos) d.yes_or_no = false;
        } else if (k == "new_plan") {
            d.new_plan = had_list ? value_list : std::vector<std::string>{value};
        } else if (k == "current_state") {
            d.current_state = value;
        } else {
            d.extras[*key] = value;
        }
    }
    if (!any) throw ParseError("no recognizable decision keys in answer");
    return d;
}

// Splits free-form plan strings on "1." style boundaries and parses each
// fragment into a sub-goal; unparseable fragments are dropped.
inline Plan plan_from_strings(const std::vector<std::string>& items, int step) {
    Plan plan;
    plan.created_step = step;
    static const std::regex boundary(R"((?:^|\s)\d+\.\s)");
    for (const auto& item : items) {
        std::vector<std::string> fragments;
        std::sregex_iterator it(item.begin(), item.end(), boundary), end;
        std::size_t prev = 0;
        bool split_any = false;
        for (; it != end; ++it) {
            const std::size_t pos = std::size_t(it->position()) + it->length();
            if (split_any || it->position() > 0) {
                fragments.push_back(item.substr(prev, std::size_t(it->position()) - prev));
            }
            prev = pos;
            split_any = true;
        }
        fragments.push_back(item.substr(prev));
        for (const auto& frag : fragments) {
            if (auto sg = parse_subgoal_text(frag)) plan.subgoals.push_back(*sg);
        }
    }
    return plan;
}

// ---------------------------------------------------------------------------
// Backends
// ---------------------------------------------------------------------------

class LmBackend {
public:
    virtual ~LmBackend() = default;
    virtual std::string complete(const std::vector<ChatTurn>& turns) = 0;
};

inline std::string normalize_prompt(const std::string& s) {
    std::string out;
    bool in_space = true;
    for (char c : s) {
        if (std::isspace(static_cast<unsigned char>(c))) {
            if (!in_space) out += ' ';
            in_space = true;
        } else {
            out += c;
            in_space = false;
        }
    }
    while (!out.empty() && out.back() == ' ') out.pop_back();
    return out;
}

inline std::string prompt_hash_hex(const std::string& prompt) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx",
                  static_cast<unsigned long long>(fnv1a64(normalize_prompt(prompt))));
    return buf;
}

// --- scripted ---------------------------------------------------------------

namespace scripted {

inline std::optional<Coord> parse_position(const std::string& q) {
    static const std::regex re(R"(You are now at \((-?[0-9.]+), (-?[0-9.]+)\))");
    std::smatch m;
    if (!std::regex_search(q, m, re)) return std::nullopt;
    return Coord{std::stod(m[1]), std::stod(m[2])};
}

inline std::vector<Coord> parse_inferences(const std::string& q) {
    static const std::regex re(R"(time you inferred the goal was at \((-?[0-9.]+), (-?[0-9.]+)\))");
    std::vector<Coord> out;
    for (auto it = std::sregex_iterator(q.begin(), q.end(), re); it != std::sregex_iterator(); ++it) {
        out.push_back({std::stod((*it)[1]), std::stod((*it)[2])});
    }
    return out;
}

inline std::optional<Coord> parse_instant_delta(const std::string& q) {
    static const std::regex at_re(R"(Now you infer that the goal is at your current position)");
    if (std::regex_search(q, at_re)) return Coord{0.0, 0.0};
    static const std::regex re(R"(Now you infer that the goal is in ([^.]+)\.)");
    std::smatch m;
    if (!std::regex_search(q, m, re)) return std::nullopt;
    static const std::regex part_re(R"((North|South|East|West|Northeast|Northwest|Southeast|Southwest) (-?[0-9.]+) steps?)");
    const std::string phrase = m[1];
    Coord delta{0.0, 0.0};
    for (auto it = std::sregex_iterator(phrase.begin(), phrase.end(), part_re); it != std::sregex_iterator(); ++it) {
        const auto dir = octant_from_name((*it)[1]);
        if (!dir) continue;
        const Coord unit = octant_unit(*dir);
        const double steps = std::stod((*it)[2]);
        delta = delta + Coord{unit.x * steps, unit.y * steps};
    }
    return delta;
}

inline std::vector<ConnectionView> parse_connections(const std::string& q) {
    static const std::regex re(
        R"((North|South|East|West|Northeast|Northwest|Southeast|Southwest) is at \((-?[0-9.]+), (-?[0-9.]+)\)(?:, (Visited|Unvisited))?\.)");
    std::vector<ConnectionView> out;
    for (auto it = std::sregex_iterator(q.begin(), q.end(), re); it != std::sregex_iterator(); ++it) {
        ConnectionView c;
        c.direction = *octant_from_name((*it)[1]);
        c.coord = {std::stod((*it)[2]), std::stod((*it)[3])};
        c.visited = (*it)[4] == "Visited";
        out.push_back(c);
    }
    return out;
}

inline std::optional<Coord> parse_goal_coord(const std::string& q) {
    static const std::regex re(R"(The goal coordinates are most likely to be \((-?[0-9.]+), (-?[0-9.]+)\))");
    std::smatch m;
    if (!std::regex_search(q, m, re)) return std::nullopt;
    return Coord{std::stod(m[1]), std::stod(m[2])};
}

inline std::vector<std::string> parse_plan_items(const std::string& q) {
    static const std::regex re(R"re(The (?:last )?plan is (\[))re");
    std::smatch m;
    if (!std::regex_search(q, m, re)) return {};
    std::size_t p = std::size_t(m.position(1));
    auto inner = detail::read_bracketed(q, p);
    if (!inner) return {};
    return detail::list_items(*inner);
}

inline std::vector<EpisodicRecord> parse_memory_records(const std::string& q) {
    std::vector<EpisodicRecord> out;
    std::istringstream in(q);
    std::string line;
    int t = 0;
    while (std::getline(in, line)) {
        auto parsed = parse_record(line);
        if (!parsed) continue;
        EpisodicRecord r;
        r.t = t++;
        r.coord = parsed->coord;
        for (int o : parsed->options) r.options.push_back({o, 0, {}, false});
        r.action = parsed->action;
        r.arrived_coord = parsed->arrived_coord;
        out.push_back(std::move(r));
    }
    return out;
}

} // namespace scripted

// Deterministic answers in the recorded dialogue format, produced by the same
// geometry/planning code the direct agents use.
class ScriptedBackend : public LmBackend {
public:
    std::string complete(const std::vector<ChatTurn>& turns) override {
        const std::string& q = last_user_content(turns);
        if (q.find("Summarize all your memory") != std::string::npos) return answer_summary(q);
        if (q.find("According to all your inferences") != std::string::npos) return answer_fuse(q);
        if (q.find("Which step of the plan") != std::string::npos) return answer_planning(q);
        if (q.find("visible in the image") != std::string::npos) return "No.";
        if (q.find("choose one in") != std::string::npos) return answer_direct(q);
        throw ParseError("scripted backend cannot answer this prompt");
    }

private:
    static std::string answer_summary(const std::string& q) {
        const auto records = scripted::parse_memory_records(q);
        if (records.empty()) throw ParseError("summary prompt carries no parseable records");
        return scripted_summary_text(records, 0, records.size());
    }

    static std::string answer_fuse(const std::string& q) {
        const auto pos = scripted::parse_position(q);
        if (!pos) throw ParseError("fuse prompt has no current position");
        std::vector<GoalEstimate> estimates;
        int step = 0;
        for (Coord c : scripted::parse_inferences(q)) {
            estimates.push_back({c, GoalEstimate::Source::perceived, step++});
        }
        if (auto delta = scripted::parse_instant_delta(q)) {
            estimates.push_back({*pos + *delta, GoalEstimate::Source::anticipated, step++});
        }
        if (estimates.empty()) throw ParseError("fuse prompt carries no inferences");
        const Coord fused = fuse_estimates(estimates);
        std::string out = "\"Answer_Q1\": \"The goal coordinates are most likely to be " + coord_text(fused) + ".\"\n";
        out += "\"Answer_Q2\": \"" + goal_direction_clause(fused, *pos) + "\"";
        return out;
    }

    static std::string answer_planning(const std::string& q) {
        const auto pos = scripted::parse_position(q);
        const auto conns = scripted::parse_connections(q);
        if (!pos || conns.empty()) throw ParseError("planning prompt lacks position or connections");

        NodeContext ctx;
        ctx.degree = conns.size();
        for (std::size_t i = 0; i < conns.size(); ++i) {
            ctx.connections.push_back({conns[i].direction, NodeId(i), conns[i].coord, conns[i].visited});
        }
        WorkingState ws;
        if (auto goal = scripted::parse_goal_coord(q)) {
            ws.fused = {*goal, GoalEstimate::Source::fused, 0};
        } else if (auto delta = scripted::parse_instant_delta(q)) {
            ws.fused = {*pos + *delta, GoalEstimate::Source::perceived, 0};
        } else {
            ws.lost = true;
        }
        if (!ws.lost) ctx.at_goal = ws.fused.coord == *pos;

        std::optional<Plan> old;
        const auto items = scripted::parse_plan_items(q);
        if (!items.empty()) {
            Plan parsed = plan_from_strings(items, 0);
            if (!parsed.subgoals.empty()) old = std::move(parsed);
        }
        Plan next = update_plan(old, ws, *pos, ctx, 0);
        const bool kept = old && next.subgoals == old->subgoals && next.cursor == old->cursor;

        Plan act_plan = next;
        const ActionChoice act = select_action(act_plan, ctx, std::nullopt);

        std::string out = "\"current_state\": \"Step 1\"\n";
        out += std::string("\"yes_or_no\": \"") + (kept ? "No" : "Yes") + "\"\n";
        if (!kept) out += "\"new_plan\": " + plan_list_text(render_plan(next)) + "\n";
        out += "\"action_reason\": \"" + act.reason + "\"\n";
        out += "\"action\": \"" + std::string(kOctantNames[act.direction]) + "\"";
        return out;
    }

    static std::string answer_direct(const std::string& q) {
        const auto conns = scripted::parse_connections(q);
        if (conns.empty()) throw ParseError("action prompt lists no connections");
        const auto pos = scripted::parse_position(q);
        std::optional<Coord> goal = scripted::parse_goal_coord(q);
        std::optional<Coord> delta;
        if (goal && pos) delta = *goal - *pos;
        else if (auto d = scripted::parse_instant_delta(q)) delta = d;

        const ConnectionView* best = nullptr;
        double best_key = 0.0;
        for (const auto& c : conns) {
            double key;
            if (delta && !(delta->x == 0.0 && delta->y == 0.0)) {
                const double goal_bearing = rel_pos({0.0, 0.0}, *delta).bearing_deg;
                key = std::abs(signed_angle_diff(octant_center(c.direction), goal_bearing));
            } else {
                key = octant_center(c.direction) + (c.visited ? 360.0 : 0.0); // unvisited first, clockwise
            }
            const bool better = !best || key < best_key ||
                                (key == best_key && ((!c.visited && best->visited) ||
                                                     (c.visited == best->visited && c.direction < best->direction)));
            if (better) {
                best = &c;
                best_key = key;
            }
        }
        std::string reason = std::string(kOctantNames[best->direction]) +
                             (delta ? " is the closest available direction to the goal" : " explores the area") +
                             (best->visited ? "; target already visited" : "; target unvisited");
        return "\"action_reason\": \"" + reason + "\"\n\"action\": \"" + std::string(kOctantNames[best->direction]) +
               "\"";
    }
};

// --- replay ------------------------------------------------------------------

class ReplayBackend : public LmBackend {
public:
    ReplayBackend() = default;

    static ReplayBackend from_jsonl(const std::string& bytes) {
        ReplayBackend b;
        std::istringstream in(bytes);
        std::string line;
        int lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
            try {
                const auto j = nlohmann::json::parse(line);
                b.answers_[j.at("prompt_hash").get<std::string>()] = j.at("answer").get<std::string>();
            } catch (const nlohmann::json::exception& e) {
                throw ValidationError("transcript line " + std::to_string(lineno) + ": " + e.what());
            }
        }
        return b;
    }

    void add(const std::string& prompt, const std::string& answer) {
        answers_[prompt_hash_hex(prompt)] = answer;
    }

    std::string complete(const std::vector<ChatTurn>& turns) override {
        const std::string key = prompt_hash_hex(last_user_content(turns));
        const auto it = answers_.find(key);
        if (it == answers_.end()) throw ReplayMiss("no recorded answer for prompt hash " + key);
        return it->second;
    }

    std::size_t size() const { return answers_.size(); }

private:
    std::map<std::string, std::string> answers_;
};

// Wraps any backend and captures a replayable transcript.
class RecordingBackend : public LmBackend {
public:
    explicit RecordingBackend(LmBackend& inner) : inner_(inner) {}

    std::string complete(const std::vector<ChatTurn>& turns) override {
        const std::string answer = inner_.complete(turns);
        entries_.push_back({prompt_hash_hex(last_user_content(turns)), answer});
        return answer;
    }

    std::string to_jsonl() const {
        std::string out;
        for (const auto& [hash, answer] : entries_) {
            out += nlohmann::json{{"prompt_hash", hash}, {"answer", answer}}.dump() + "\n";
        }
        return out;
    }

private:
    LmBackend& inner_;
    std::vector<std::pair<std::string, std::string>> entries_;
};

// --- remote ------------------------------------------------------------------

class RemoteBackend : public LmBackend {
public:
    RemoteBackend(HttpJsonClient http, std::string model, double temperature = 0.0)
        : http_(std::move(http)), model_(std::move(model)), temperature_(temperature) {}

    static std::optional<RemoteBackend> from_env(std::string model, double temperature = 0.0) {
        auto http = HttpJsonClient::from_env("NAV_LM_ENDPOINT", "NAV_LM_API_KEY");
        if (!http) return std::nullopt;
        return RemoteBackend(std::move(*http), std::move(model), temperature);
    }

    std::string complete(const std::vector<ChatTurn>& turns) override {
        nlohmann::json messages = nlohmann::json::array();
        for (const auto& t : turns) {
            messages.push_back({{"role", role_name(t.role)}, {"content", t.content}});
        }
        const nlohmann::json res =
            http_.post({{"model", model_}, {"messages", std::move(messages)}, {"temperature", temperature_}});
        if (!res.contains("content") || !res["content"].is_string()) {
            throw TransportError("chat endpoint returned no content field");
        }
        return res["content"].get<std::string>();
    }

private:
    HttpJsonClient http_;
    std::string model_;
    double temperature_;
};

} // namespace citynav
