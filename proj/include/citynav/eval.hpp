#pragma once

#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <numeric>
#include <string>
#include <thread>
#include <vector>

#include "citynav/agents.hpp"
#include "citynav/env.hpp"
#include "citynav/taskgen.hpp"

namespace citynav {

// Success weighted by path length: S * l / max(p, l).
inline double spl(bool success, int l, int p) {
    if (l <= 0) throw ValidationError("spl requires a positive minimum step count");
    if (!success) return 0.0;
    return double(l) / double(std::max(p, l));
}

struct EpisodeRow {
    std::string task_id;
    AgentKind kind = AgentKind::prep;
    bool success = false;
    int p = 0; // steps taken
    int l = 0; // minimum steps
    double spl_term = 0.0;
    std::vector<NodeId> path;
    std::string failure_cause;
};

struct KindSummary {
    AgentKind kind = AgentKind::prep;
    int episodes = 0;
    double sr_percent = 0.0;
    double spl_percent = 0.0;
};

struct BatchReport {
    std::vector<EpisodeRow> rows; // kind-major, then task order
    std::vector<KindSummary> summaries;
    int warnings = 0; // episodes that ended through a recorded failure
};

struct BatchConfig {
    std::vector<AgentKind> kinds{AgentKind::prep};
    PerceptionProfile profile;
    std::uint64_t seed = 0;
    int parallelism = 1;
    LmBackend* backend = nullptr;
    const VisionClient* vision = nullptr;
    int reasoner_retries = 2;
    std::string log_dir; // empty: keep nothing on disk
};

inline const char* agent_display_name(AgentKind k) {
    switch (k) {
        case AgentKind::prep: return "PReP";
        case AgentKind::prep_no_reflection: return "PReP w/o Reflection";
        case AgentKind::prep_no_planning: return "PReP w/o Planning";
        case AgentKind::react: return "React";
        default: return "Random";
    }
}

namespace detail {

struct LockedBackend final : LmBackend {
    LmBackend* inner;
    std::mutex mu;
    explicit LockedBackend(LmBackend* b) : inner(b) {}
    std::string complete(const std::vector<ChatTurn>& turns) override {
        std::lock_guard<std::mutex> g(mu);
        return inner->complete(turns);
    }
};

inline std::string episode_log_text(const EpisodeLog& log, AgentKind kind) {
    std::string out;
    for (const auto& e : log.trace) out += e.dump() + "\n";
    json path = json::array();
    for (NodeId n : log.result.path) path.push_back(n);
    json result{{"task_id", log.result.task_id},
                {"kind", agent_kind_name(kind)},
                {"success", log.result.success},
                {"steps_taken", log.result.steps_taken},
                {"min_steps", log.result.min_steps},
                {"path", std::move(path)},
                {"failure_cause", log.result.failure_cause}};
    out += json{{"result", std::move(result)}}.dump() + "\n";
    return out;
}

inline std::string two_decimals(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", v);
    return buf;
}

// Summaries always appear in the canonical method order, so a table rendered
// from a live batch matches one rebuilt from its logs byte for byte.
inline void summarize_kinds(BatchReport& report) {
    std::vector<AgentKind> kinds;
    for (const auto& r : report.rows) {
        if (std::find(kinds.begin(), kinds.end(), r.kind) == kinds.end()) kinds.push_back(r.kind);
    }
    std::sort(kinds.begin(), kinds.end());
    for (AgentKind kind : kinds) {
        KindSummary s;
        s.kind = kind;
        double sr = 0.0, spl_sum = 0.0;
        for (const auto& r : report.rows) {
            if (r.kind != kind) continue;
            ++s.episodes;
            sr += r.success ? 1.0 : 0.0;
            spl_sum += r.spl_term;
        }
        s.sr_percent = 100.0 * sr / s.episodes;
        s.spl_percent = 100.0 * spl_sum / s.episodes;
        report.summaries.push_back(s);
    }
}

} // namespace detail

// Runs every (kind, task) pair over a bounded worker pool. Episode seeds
// derive from (seed, task_id, kind) alone, so results and logs do not depend
// on the parallelism level or scheduling order.
inline BatchReport run_batch(const EnvGraph& env, const std::vector<Task>& tasks, const BatchConfig& cfg) {
    if (tasks.empty()) throw ValidationError("run_batch requires at least one task");
    if (cfg.kinds.empty()) throw ValidationError("run_batch requires at least one agent kind");

    std::optional<detail::LockedBackend> locked;
    if (cfg.backend) locked.emplace(cfg.backend);

    const std::size_t total = tasks.size() * cfg.kinds.size();
    std::vector<EpisodeRow> rows(total);
    std::vector<std::string> log_texts(cfg.log_dir.empty() ? 0 : total);
    std::atomic<std::size_t> cursor{0};

    auto worker = [&] {
        for (;;) {
            const std::size_t i = cursor.fetch_add(1);
            if (i >= total) return;
            const AgentKind kind = cfg.kinds[i / tasks.size()];
            const Task& task = tasks[i % tasks.size()];
            EpisodeRow row;
            row.task_id = task.task_id;
            row.kind = kind;
            row.l = task.min_steps;
            try {
                EpisodeConfig ec;
                ec.kind = kind;
                ec.profile = cfg.profile;
                ec.seed = cfg.seed;
                ec.backend = locked ? &*locked : nullptr;
                ec.vision = cfg.vision;
                ec.reasoner_retries = cfg.reasoner_retries;
                EpisodeLog log = run_episode(env, task, ec);
                row.success = log.result.success;
                row.p = log.result.steps_taken;
                row.path = log.result.path;
                row.failure_cause = log.result.failure_cause;
                row.spl_term = spl(row.success, row.l, row.p);
                if (!log_texts.empty()) log_texts[i] = detail::episode_log_text(log, kind);
            } catch (const std::exception& e) {
                row.failure_cause = e.what();
                if (!log_texts.empty()) {
                    EpisodeLog stub;
                    stub.result.task_id = task.task_id;
                    stub.result.min_steps = task.min_steps;
                    stub.result.failure_cause = row.failure_cause;
                    log_texts[i] = detail::episode_log_text(stub, kind);
                }
            }
            rows[i] = std::move(row);
        }
    };

    const int threads = std::clamp(cfg.parallelism, 1, int(total));
    std::vector<std::thread> pool;
    for (int i = 1; i < threads; ++i) pool.emplace_back(worker);
    worker();
    for (auto& th : pool) th.join();

    if (!cfg.log_dir.empty()) {
        std::filesystem::create_directories(cfg.log_dir);
        for (std::size_t i = 0; i < total; ++i) {
            const AgentKind kind = cfg.kinds[i / tasks.size()];
            const std::string name = std::string(agent_kind_name(kind)) + "_" + tasks[i % tasks.size()].task_id +
                                     ".jsonl";
            std::ofstream out(std::filesystem::path(cfg.log_dir) / name, std::ios::binary);
            if (!out) throw IoError("cannot write episode log " + name + " under " + cfg.log_dir);
            out << log_texts[i];
        }
    }

    BatchReport report;
    report.rows = std::move(rows);
    for (const auto& r : report.rows) {
        if (!r.failure_cause.empty()) ++report.warnings;
    }
    detail::summarize_kinds(report);
    return report;
}

// Rebuilds a report from episode logs written by run_batch; the rendered
// outputs are a pure function of those logs.
inline BatchReport report_from_logs(const std::string& log_dir) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(log_dir)) throw IoError("log directory not found: " + log_dir);
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(log_dir)) {
        if (entry.path().extension() == ".jsonl") files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    if (files.empty()) throw IoError("no .jsonl episode logs under " + log_dir);

    BatchReport report;
    for (const auto& file : files) {
        std::ifstream in(file, std::ios::binary);
        std::string line, last;
        while (std::getline(in, line)) {
            if (!line.empty()) last = line;
        }
        json j;
        try {
            j = json::parse(last);
        } catch (const json::exception& e) {
            throw ValidationError("malformed episode log " + file.string() + ": " + e.what());
        }
        if (!j.contains("result")) throw ValidationError("episode log " + file.string() + " has no result line");
        const json& r = j["result"];
        EpisodeRow row;
        row.task_id = r.at("task_id").get<std::string>();
        const auto kind = parse_agent_kind(r.at("kind").get<std::string>());
        if (!kind) throw ValidationError("unknown agent kind in " + file.string());
        row.kind = *kind;
        row.success = r.at("success").get<bool>();
        row.p = r.at("steps_taken").get<int>();
        row.l = r.at("min_steps").get<int>();
        row.failure_cause = r.value("failure_cause", std::string());
        for (const auto& n : r.at("path")) row.path.push_back(n.get<NodeId>());
        row.spl_term = spl(row.success, row.l, row.p);
        if (!row.failure_cause.empty()) ++report.warnings;
        report.rows.push_back(std::move(row));
    }
    detail::summarize_kinds(report);
    return report;
}

// ---------------------------------------------------------------------------
// Rendering
// ---------------------------------------------------------------------------

inline std::string render_markdown_table(const BatchReport& report) {
    std::string out = "| Methods | SR(%) | SPL(%) |\n| --- | --- | --- |\n";
    for (const auto& s : report.summaries) {
        out += "| " + std::string(agent_display_name(s.kind)) + " | " + detail::two_decimals(s.sr_percent) +
               " | " + detail::two_decimals(s.spl_percent) + " |\n";
    }
    return out;
}

inline std::string rows_csv(const BatchReport& report) {
    std::string out = "kind,task_id,success,steps_taken,min_steps,spl\n";
    for (const auto& r : report.rows) {
        out += std::string(agent_kind_name(r.kind)) + "," + r.task_id + "," + (r.success ? "1" : "0") + "," +
               std::to_string(r.p) + "," + std::to_string(r.l) + "," + detail::two_decimals(100.0 * r.spl_term) +
               "\n";
    }
    return out;
}

// ---------------------------------------------------------------------------
// Sweeps
// ---------------------------------------------------------------------------

struct DistanceBin {
    int lo = 0; // inclusive, in steps
    int hi = 0; // exclusive
    int episodes = 0;
    int successes = 0;
    double sr_percent = 0.0;
    double mean_path_ratio = 0.0; // mean p/l over successes; 0 when none
};

inline std::vector<DistanceBin> sweep_by_distance(const BatchReport& report) {
    if (report.rows.empty()) throw ValidationError("sweep_by_distance requires a non-empty report");
    int max_bin = 0;
    for (const auto& r : report.rows) max_bin = std::max(max_bin, r.l / 10);
    std::vector<DistanceBin> bins(std::size_t(max_bin) + 1);
    std::vector<double> ratio_sum(bins.size(), 0.0);
    for (std::size_t i = 0; i < bins.size(); ++i) {
        bins[i].lo = int(i) * 10;
        bins[i].hi = int(i + 1) * 10;
    }
    for (const auto& r : report.rows) {
        DistanceBin& b = bins[std::size_t(r.l / 10)];
        ++b.episodes;
        if (r.success) {
            ++b.successes;
            ratio_sum[std::size_t(r.l / 10)] += double(r.p) / double(r.l);
        }
    }
    for (std::size_t i = 0; i < bins.size(); ++i) {
        if (bins[i].episodes > 0) bins[i].sr_percent = 100.0 * bins[i].successes / bins[i].episodes;
        if (bins[i].successes > 0) bins[i].mean_path_ratio = ratio_sum[i] / bins[i].successes;
    }
    return bins;
}

// Ground-truth fraction of the logged path standing inside at least one
// landmark's visibility radius.
inline double path_visibility_fraction(const EnvGraph& env, const std::vector<NodeId>& path) {
    if (path.empty()) throw ValidationError("visibility fraction requires a logged path");
    int seen = 0;
    for (NodeId n : path) {
        if (!env.visible_landmarks(n).empty()) ++seen;
    }
    return double(seen) / double(path.size());
}

struct VisibilityBin {
    double lo = 0.0; // inclusive
    double hi = 0.0; // exclusive except the top bin
    int episodes = 0;
    int successes = 0;
    double sr_percent = 0.0;
};

inline std::vector<VisibilityBin> sweep_by_visibility(const BatchReport& report, const EnvGraph& env) {
    if (report.rows.empty()) throw ValidationError("sweep_by_visibility requires a non-empty report");
    std::vector<VisibilityBin> bins(10);
    for (std::size_t i = 0; i < bins.size(); ++i) {
        bins[i].lo = double(i) / 10.0;
        bins[i].hi = double(i + 1) / 10.0;
    }
    for (const auto& r : report.rows) {
        const double frac = path_visibility_fraction(env, r.path);
        const std::size_t idx = std::min<std::size_t>(std::size_t(frac * 10.0), 9);
        ++bins[idx].episodes;
        if (r.success) ++bins[idx].successes;
    }
    for (auto& b : bins) {
        if (b.episodes > 0) b.sr_percent = 100.0 * b.successes / b.episodes;
    }
    return bins;
}

inline std::string distance_sweep_csv(const std::vector<DistanceBin>& bins) {
    std::string out = "bin_lo_steps,bin_hi_steps,episodes,successes,sr_percent,mean_path_ratio\n";
    for (const auto& b : bins) {
        out += std::to_string(b.lo) + "," + std::to_string(b.hi) + "," + std::to_string(b.episodes) + "," +
               std::to_string(b.successes) + "," + detail::two_decimals(b.sr_percent) + "," +
               detail::two_decimals(b.mean_path_ratio) + "\n";
    }
    return out;
}

inline std::string visibility_sweep_csv(const std::vector<VisibilityBin>& bins) {
    std::string out = "bin_lo,bin_hi,episodes,successes,sr_percent\n";
    for (const auto& b : bins) {
        out += detail::two_decimals(b.lo) + "," + detail::two_decimals(b.hi) + "," + std::to_string(b.episodes) +
               "," + std::to_string(b.successes) + "," + detail::two_decimals(b.sr_percent) + "\n";
    }
    return out;
}

// Spearman rank correlation with average ranks for ties; 0 when either side
// is constant.
inline double spearman_rank_correlation(const std::vector<double>& xs, const std::vector<double>& ys) {
    if (xs.size() != ys.size() || xs.size() < 2) {
        throw ValidationError("rank correlation requires two equally sized samples of length >= 2");
    }
    auto ranks = [](const std::vector<double>& v) {
        const std::size_t n = v.size();
        std::vector<std::size_t> order(n);
        std::iota(order.begin(), order.end(), 0);
        std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
        std::vector<double> r(n);
        std::size_t i = 0;
        while (i < n) {
            std::size_t j = i;
            while (j + 1 < n && v[order[j + 1]] == v[order[i]]) ++j;
            const double avg = (double(i) + double(j)) / 2.0 + 1.0;
            for (std::size_t k = i; k <= j; ++k) r[order[k]] = avg;
            i = j + 1;
        }
        return r;
    };
    const auto rx = ranks(xs);
    const auto ry = ranks(ys);
    const double n = double(xs.size());
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        mx += rx[i];
        my += ry[i];
    }
    mx /= n;
    my /= n;
    double num = 0.0, dx = 0.0, dy = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        num += (rx[i] - mx) * (ry[i] - my);
        dx += (rx[i] - mx) * (rx[i] - mx);
        dy += (ry[i] - my) * (ry[i] - my);
    }
    if (dx == 0.0 || dy == 0.0) return 0.0;
    return num / std::sqrt(dx * dy);
}

} // namespace citynav
