// Experiment harness: builds networks, runs the named measurement, and emits
// deterministic CSV/JSON reports. Each experiment fans out one simulation per
// (parameter point, seed); merging is an ordered reduction, so identical
// configs and seeds always produce byte-identical output.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "georing/sim.hpp"

namespace georing::bench {

using geokey::GeoPoint;

// --- config file -----------------------------------------------------------------

// flat key = value lines; '#' starts a comment
inline sim::SimConfig parse_config(const std::string& text) {
    sim::SimConfig cfg;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        auto trim = [](std::string s) {
            const auto b = s.find_first_not_of(" \t\r");
            const auto e = s.find_last_not_of(" \t\r");
            return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
        };
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        try {
            if (key == "seed")
                cfg.seed = std::stoull(value);
            else if (key == "nodes")
                cfg.nodes = std::stoi(value);
            else if (key == "side")
                cfg.side = std::stod(value);
            else if (key == "k")
                cfg.k = std::stoi(value);
            else if (key == "height")
                cfg.h = std::stoi(value);
            else if (key == "neighborhood")
                cfg.M = std::stoi(value);
            else if (key == "loss")
                cfg.loss = std::stod(value);
            else if (key == "jitter")
                cfg.jitter = std::stod(value);
            else if (key == "velocity")
                cfg.base_velocity = std::stod(value);
            else if (key == "velocity_grid") {
                cfg.velocity_grid.clear();
                std::istringstream vs(value);
                std::string tok;
                while (std::getline(vs, tok, ',')) cfg.velocity_grid.push_back(std::stod(tok));
            } else if (key == "m_bits")
                cfg.m_bits = std::stoi(value);
            else if (key == "churn.join")
                cfg.churn.join_rate = std::stod(value);
            else if (key == "churn.leave")
                cfg.churn.leave_rate = std::stod(value);
            else if (key == "churn.fail")
                cfg.churn.fail_rate = std::stod(value);
            else if (key == "route_length_weight")
                cfg.route_length_weight = std::stod(value);
            else
                throw ConfigError("unknown key '" + key + "'");
        } catch (const std::invalid_argument&) {
            throw ConfigError("line " + std::to_string(lineno) + ": bad value for '" + key + "'");
        }
    }
    cfg.validate();
    return cfg;
}

// --- reports ---------------------------------------------------------------------

enum class ExperimentKind { PathLength, PeerLatency, PathLatency, Overhead, Storage, Convergence, Churn };

inline const char* experiment_name(ExperimentKind k) {
    switch (k) {
        case ExperimentKind::PathLength: return "path-length";
        case ExperimentKind::PeerLatency: return "peer-latency";
        case ExperimentKind::PathLatency: return "path-latency";
        case ExperimentKind::Overhead: return "overhead";
        case ExperimentKind::Storage: return "storage";
        case ExperimentKind::Convergence: return "convergence";
        default: return "churn";
    }
}

inline ExperimentKind parse_experiment(const std::string& name) {
    for (ExperimentKind k :
         {ExperimentKind::PathLength, ExperimentKind::PeerLatency, ExperimentKind::PathLatency,
          ExperimentKind::Overhead, ExperimentKind::Storage, ExperimentKind::Convergence,
          ExperimentKind::Churn})
        if (name == experiment_name(k)) return k;
    throw ConfigError("unknown experiment '" + name + "'");
}

struct ReportRow {
    std::string experiment;
    std::string point;      // parameter point, "key=value;key=value"
    std::string statistic;
    double value = 0.0;
    double stderr_ = 0.0;
    bool has_stderr = false;
};

inline std::string format_g9(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.9g", v);
    return buf;
}

struct MetricsReport {
    std::string format_version = "1";
    std::vector<ReportRow> rows;

    std::string to_csv() const {
        std::string out = "experiment,point,statistic,value,stderr\n";
        for (const auto& r : rows) {
            out += r.experiment + "," + r.point + "," + r.statistic + "," + format_g9(r.value) + ",";
            if (r.has_stderr) out += format_g9(r.stderr_);
            out += "\n";
        }
        return out;
    }

    // values go through the same %.9g rendering as the CSV, so both
    // encodings carry identical numbers
    nlohmann::json to_json() const {
        nlohmann::json j;
        j["format_version"] = format_version;
        j["rows"] = nlohmann::json::array();
        for (const auto& r : rows) {
            nlohmann::json row;
            row["experiment"] = r.experiment;
            row["point"] = r.point;
            row["statistic"] = r.statistic;
            row["value"] = std::strtod(format_g9(r.value).c_str(), nullptr);
            if (r.has_stderr) row["stderr"] = std::strtod(format_g9(r.stderr_).c_str(), nullptr);
            j["rows"].push_back(row);
        }
        return j;
    }

    const ReportRow* find(const std::string& point, const std::string& statistic) const {
        for (const auto& r : rows)
            if (r.point == point && r.statistic == statistic) return &r;
        return nullptr;
    }
};

struct ExperimentOptions {
    std::vector<int> nodes_sweep;  // empty: per-experiment default
    int repetitions = 5;
    int pairs = 1000;
    int epochs = 512;  // enough for interval saturation in the swarm runs
    std::vector<double> fail_fractions{0.05, 0.10, 0.20};
    bool trace = false;
    std::string trace_out;  // filled by experiments when trace is on
};

namespace detail {

struct Agg {
    std::vector<double> samples;
    void add(double v) { samples.push_back(v); }
    double mean() const {
        double s = 0;
        for (double v : samples) s += v;
        return samples.empty() ? 0.0 : s / samples.size();
    }
    double stderr_mean() const {
        if (samples.size() < 2) return 0.0;
        const double m = mean();
        double ss = 0;
        for (double v : samples) ss += (v - m) * (v - m);
        return std::sqrt(ss / (samples.size() - 1)) / std::sqrt(static_cast<double>(samples.size()));
    }
};

inline double percentile(std::vector<double> v, double p) {
    if (v.empty()) return 0.0;
    std::sort(v.begin(), v.end());
    const size_t idx = std::min(v.size() - 1, static_cast<size_t>(p * (v.size() - 1) + 0.5));
    return v[idx];
}

inline std::vector<GeoPoint> live_positions(dht::Overlay& overlay) {
    std::vector<GeoPoint> pos;
    for (uint64_t k : overlay.live_keys()) pos.push_back(overlay.state(k).id.position);
    return pos;
}

inline void push_row(MetricsReport& report, ExperimentKind kind, const std::string& point,
                     const std::string& stat, const Agg& agg) {
    report.rows.push_back({experiment_name(kind), point, stat, agg.mean(), agg.stderr_mean(),
                           agg.samples.size() > 1});
}

inline void push_value(MetricsReport& report, ExperimentKind kind, const std::string& point,
                       const std::string& stat, double value) {
    report.rows.push_back({experiment_name(kind), point, stat, value, 0.0, false});
}

// drive one route per live node per epoch toward random targets so traffic
// logs and indicators have something to learn from
inline void workload_epoch(sim::SimNet& net, Rng& rng) {
    const auto keys = net.overlay().live_keys();
    if (keys.size() < 2) return;
    for (uint64_t src : keys) {
        const uint64_t dst = keys[rng.next_below(keys.size())];
        if (dst == src) continue;
        net.route_and_learn(src, {dst, net.config().m_bits});
    }
}

}  // namespace detail

// --- experiments -----------------------------------------------------------------

inline MetricsReport run_path_length(const sim::SimConfig& base, ExperimentOptions& opts) {
    MetricsReport report;
    const auto sweep = opts.nodes_sweep.empty() ? std::vector<int>{64, 256, 1024} : opts.nodes_sweep;
    std::string trace;
    int traced_routes = 0;
    if (opts.trace) trace = "hop,node_key,g,h,f,link_latency\n";
    for (int n : sweep) {
        std::map<std::string, detail::Agg> mean_hops, p95_hops;
        for (int rep = 0; rep < opts.repetitions; ++rep) {
            sim::SimConfig cfg = base;
            cfg.nodes = n;
            cfg.seed = base.seed + rep;
            sim::SimNet net(cfg);
            const auto keys = net.overlay().live_keys();
            const auto positions = detail::live_positions(net.overlay());
            sim::FlatChord flat(positions, net.link(), cfg.m_bits, hash_combine(cfg.seed, 0xf1a7));
            sim::XorOverlay xnet(positions, net.link(), hash_combine(cfg.seed, 0x808));

            Rng pair_rng = Rng(cfg.seed).split(0x70617273ull);
            Rng lat_rng = Rng(cfg.seed).split(0x6c617479ull);
            std::vector<double> ours, flats, xors;
            for (int t = 0; t < opts.pairs; ++t) {
                const size_t a = pair_rng.next_below(keys.size());
                const size_t b = pair_rng.next_below(keys.size());
                if (a == b) continue;
                std::vector<route::TraceRow> rows;
                const bool want_trace = opts.trace && traced_routes < 10;
                auto env = net.route_env(true);
                const auto res =
                    route::route(env, keys[a], {keys[b], cfg.m_bits}, -1, want_trace ? &rows : nullptr);
                if (want_trace && !rows.empty()) {
                    const auto csv = route::trace_to_csv(rows);
                    trace += csv.substr(csv.find('\n') + 1);  // drop the repeated header
                    ++traced_routes;
                }
                if (res.status == route::RouteStatus::Delivered)
                    ours.push_back(static_cast<double>(res.path.hops.size() - 1));
                const auto fp = flat.route(a, flat.key_of(b), lat_rng);
                if (fp.delivered) flats.push_back(fp.hops);
                const auto xp = xnet.route(a, xnet.id_of(b), lat_rng);
                if (xp.delivered) xors.push_back(xp.hops);
            }
            auto fold = [&](const char* overlay, const std::vector<double>& hops) {
                double s = 0;
                for (double h : hops) s += h;
                mean_hops[overlay].add(s / std::max<size_t>(hops.size(), 1));
                p95_hops[overlay].add(detail::percentile(hops, 0.95));
            };
            fold("ours", ours);
            fold("flat-chord", flats);
            fold("xor", xors);
        }
        for (const auto& [overlay, agg] : mean_hops) {
            const std::string point = "nodes=" + std::to_string(n) + ";overlay=" + overlay;
            detail::push_row(report, ExperimentKind::PathLength, point, "mean_hops", agg);
            detail::push_row(report, ExperimentKind::PathLength, point, "p95_hops", p95_hops[overlay]);
        }
    }
    if (opts.trace) opts.trace_out = trace;
    return report;
}

inline MetricsReport run_peer_latency(const sim::SimConfig& base, const ExperimentOptions& opts) {
    MetricsReport report;
    const int n = opts.nodes_sweep.empty() ? 1024 : opts.nodes_sweep[0];
    sim::SimConfig probe = base;
    probe.nodes = n;
    const int height = probe.height();
    std::vector<detail::Agg> level_mean(height + 1);
    for (int rep = 0; rep < opts.repetitions; ++rep) {
        sim::SimConfig cfg = base;
        cfg.nodes = n;
        cfg.seed = base.seed + rep;
        sim::SimNet net(cfg);
        Rng rng = Rng(cfg.seed).split(0x706c6174ull);
        const auto keys = net.overlay().live_keys();
        for (int level = 0; level <= height; ++level) {
            // group nodes by their level-prefix
            std::map<std::string, std::vector<uint64_t>> groups;
            for (uint64_t k : keys) {
                const auto& path = net.overlay().state(k).id.cluster_path;
                groups[path.substr(0, std::min<size_t>(level, path.size()))].push_back(k);
            }
            double total = 0.0;
            int count = 0;
            for (int t = 0; t < 4000; ++t) {
                const uint64_t a = keys[rng.next_below(keys.size())];
                const auto& pa = net.overlay().state(a).id.cluster_path;
                const auto& group = groups[pa.substr(0, std::min<size_t>(level, pa.size()))];
                if (group.size() < 2) continue;
                const uint64_t b = group[rng.next_below(group.size())];
                if (a == b) continue;
                total += net.link().expected_latency(net.overlay().state(a).id.position,
                                                     net.overlay().state(b).id.position);
                ++count;
            }
            if (count > 0) level_mean[level].add(total / count);
        }
    }
    for (int level = 0; level <= height; ++level)
        detail::push_row(report, ExperimentKind::PeerLatency,
                         "nodes=" + std::to_string(n) + ";level=" + std::to_string(level),
                         "mean_latency", level_mean[level]);
    return report;
}

inline MetricsReport run_path_latency(const sim::SimConfig& base, const ExperimentOptions& opts) {
    MetricsReport report;
    const int n = opts.nodes_sweep.empty() ? 1024 : opts.nodes_sweep[0];
    std::map<std::string, detail::Agg> mean_lat, p50_lat, p95_lat;
    for (int rep = 0; rep < opts.repetitions; ++rep) {
        sim::SimConfig cfg = base;
        cfg.nodes = n;
        cfg.seed = base.seed + rep;
        sim::SimNet net(cfg);
        const auto keys = net.overlay().live_keys();
        const auto positions = detail::live_positions(net.overlay());
        sim::FlatChord flat(positions, net.link(), cfg.m_bits, hash_combine(cfg.seed, 0xf1a7));
        sim::XorOverlay xnet(positions, net.link(), hash_combine(cfg.seed, 0x808));

        Rng pair_rng = Rng(cfg.seed).split(0x70617273ull);
        Rng lat_rng = Rng(cfg.seed).split(0x6c617479ull);
        std::vector<double> ours, flats, xors;
        for (int t = 0; t < opts.pairs; ++t) {
            const size_t a = pair_rng.next_below(keys.size());
            const size_t b = pair_rng.next_below(keys.size());
            if (a == b) continue;
            const auto res = net.route_and_learn(keys[a], {keys[b], cfg.m_bits});
            if (res.status == route::RouteStatus::Delivered) ours.push_back(res.path.total_latency);
            const auto fp = flat.route(a, flat.key_of(b), lat_rng);
            if (fp.delivered) flats.push_back(fp.latency);
            const auto xp = xnet.route(a, xnet.id_of(b), lat_rng);
            if (xp.delivered && xp.hops > 0) xors.push_back(xp.latency);
        }
        auto fold = [&](const char* overlay, const std::vector<double>& lat) {
            double s = 0;
            for (double v : lat) s += v;
            mean_lat[overlay].add(s / std::max<size_t>(lat.size(), 1));
            p50_lat[overlay].add(detail::percentile(lat, 0.50));
            p95_lat[overlay].add(detail::percentile(lat, 0.95));
        };
        fold("ours", ours);
        fold("flat-chord", flats);
        fold("xor", xors);
    }
    for (const auto& [overlay, agg] : mean_lat) {
        const std::string point = "nodes=" + std::to_string(n) + ";overlay=" + overlay;
        detail::push_row(report, ExperimentKind::PathLatency, point, "mean_latency", agg);
        detail::push_row(report, ExperimentKind::PathLatency, point, "p50_latency", p50_lat[overlay]);
        detail::push_row(report, ExperimentKind::PathLatency, point, "p95_latency", p95_lat[overlay]);
    }
    return report;
}

inline MetricsReport run_storage(const sim::SimConfig& base, const ExperimentOptions& opts,
                                 ExperimentOptions* trace_sink = nullptr) {
    MetricsReport report;
    const int n = opts.nodes_sweep.empty() ? 1024 : opts.nodes_sweep[0];
    sim::SimConfig cfg = base;
    cfg.nodes = n;
    sim::SimNet net(cfg);
    const auto& params = net.overlay().params();
    const int finger_bound = dht::finger_capacity(params.k, params.h);
    const int total_bound = finger_bound + params.M + params.s;

    size_t max_fingers = 0, max_total = 0;
    long violations = 0;
    double sum_total = 0;
    const auto keys = net.overlay().live_keys();
    for (uint64_t k : keys) {
        const auto& t = net.overlay().state(k).table;
        max_fingers = std::max(max_fingers, t.finger_count());
        max_total = std::max(max_total, t.total_entries());
        sum_total += static_cast<double>(t.total_entries());
        if (static_cast<int>(t.finger_count()) > finger_bound ||
            static_cast<int>(t.total_entries()) > total_bound)
            ++violations;
    }
    const std::string point = "nodes=" + std::to_string(n) + ";k=" + std::to_string(params.k) +
                              ";h=" + std::to_string(params.h) + ";M=" + std::to_string(params.M) +
                              ";s=" + std::to_string(params.s);
    detail::push_value(report, ExperimentKind::Storage, point, "max_fingers",
                       static_cast<double>(max_fingers));
    detail::push_value(report, ExperimentKind::Storage, point, "finger_bound", finger_bound);
    detail::push_value(report, ExperimentKind::Storage, point, "max_total_entries",
                       static_cast<double>(max_total));
    detail::push_value(report, ExperimentKind::Storage, point, "total_bound", total_bound);
    detail::push_value(report, ExperimentKind::Storage, point, "mean_total_entries",
                       sum_total / std::max<size_t>(keys.size(), 1));
    detail::push_value(report, ExperimentKind::Storage, point, "violations",
                       static_cast<double>(violations));

    if (opts.trace && trace_sink) {
        std::ostringstream os;
        for (uint64_t k : keys) {
            os << "# node " << geokey::RingKey{k, params.m_bits}.hex() << "\n";
            dht::dump_table(net.overlay().state(k).table, os);
        }
        trace_sink->trace_out = os.str();
    }
    return report;
}

inline MetricsReport run_convergence(const sim::SimConfig& base, const ExperimentOptions& opts,
                                     ExperimentOptions* trace_sink = nullptr) {
    MetricsReport report;
    const int n = opts.nodes_sweep.empty() ? 48 : opts.nodes_sweep[0];
    sim::SimConfig cfg = base;
    cfg.nodes = n;
    sim::SimNet net(cfg);
    Rng workload = Rng(cfg.seed).split(0x776f726bull);
    std::ostringstream trace;
    if (opts.trace) trace << "epoch,node_key,phase,gbest_fitness,interval,messages\n";

    for (int epoch = 0; epoch < opts.epochs; ++epoch) {
        detail::workload_epoch(net, workload);
        const int accepted = net.swarm_epoch();
        const auto& counters = net.counters();

        double gbest_sum = 0.0;
        int gbest_count = 0;
        for (const auto& [key, st] : net.swarm_states()) {
            if (!net.overlay().is_live(key)) continue;
            if (st.gbest_fitness == std::numeric_limits<double>::max()) continue;
            gbest_sum += st.gbest_fitness;
            ++gbest_count;
            if (opts.trace)
                trace << epoch << "," << geokey::RingKey{key, cfg.m_bits}.hex() << ","
                      << swarm::phase_name(st.phase) << "," << format_g9(st.gbest_fitness) << ","
                      << st.interval << "," << st.messages_this_epoch << "\n";
        }
        const std::string point = "nodes=" + std::to_string(n) + ";epoch=" + std::to_string(epoch);
        detail::push_value(report, ExperimentKind::Convergence, point, "mean_gbest",
                           gbest_count ? gbest_sum / gbest_count : 0.0);
        detail::push_value(report, ExperimentKind::Convergence, point, "accepts", accepted);
        detail::push_value(report, ExperimentKind::Convergence, point, "msgs_clustering",
                           static_cast<double>(
                               counters.current_epoch(swarm::OverheadCategory::Clustering).messages));
        detail::push_value(report, ExperimentKind::Convergence, point, "msgs_peer_table",
                           static_cast<double>(
                               counters.current_epoch(swarm::OverheadCategory::PeerTable).messages));
        detail::push_value(report, ExperimentKind::Convergence, point, "msgs_other",
                           static_cast<double>(
                               counters.current_epoch(swarm::OverheadCategory::Other).messages));
        detail::push_value(report, ExperimentKind::Convergence, point, "saturated",
                           net.all_saturated() ? 1.0 : 0.0);
        net.advance_epoch();
    }
    if (opts.trace && trace_sink) trace_sink->trace_out = trace.str();
    return report;
}

inline MetricsReport run_overhead(const sim::SimConfig& base, const ExperimentOptions& opts) {
    MetricsReport report;
    const int n = opts.nodes_sweep.empty() ? 48 : opts.nodes_sweep[0];
    sim::SimConfig cfg = base;
    cfg.nodes = n;
    sim::SimNet net(cfg);
    Rng workload = Rng(cfg.seed).split(0x776f726bull);
    for (int epoch = 0; epoch < opts.epochs; ++epoch) {
        detail::workload_epoch(net, workload);
        net.swarm_epoch();
        const auto& c = net.counters();
        const std::string point = "nodes=" + std::to_string(n) + ";epoch=" + std::to_string(epoch);
        auto emit = [&](const char* name, swarm::OverheadCategory cat) {
            detail::push_value(report, ExperimentKind::Overhead, point, std::string(name) + "_messages",
                               static_cast<double>(c.current_epoch(cat).messages));
            detail::push_value(report, ExperimentKind::Overhead, point, std::string(name) + "_units",
                               static_cast<double>(c.current_epoch(cat).units));
        };
        emit("clustering", swarm::OverheadCategory::Clustering);
        emit("peer_table", swarm::OverheadCategory::PeerTable);
        emit("routing", swarm::OverheadCategory::Routing);
        emit("other", swarm::OverheadCategory::Other);
        detail::push_value(report, ExperimentKind::Overhead, point, "saturated",
                           net.all_saturated() ? 1.0 : 0.0);
        net.advance_epoch();
    }
    return report;
}

inline MetricsReport run_churn(const sim::SimConfig& base, const ExperimentOptions& opts) {
    MetricsReport report;
    const int n = opts.nodes_sweep.empty() ? 256 : opts.nodes_sweep[0];
    for (double fraction : opts.fail_fractions) {
        detail::Agg success;
        for (int rep = 0; rep < opts.repetitions; ++rep) {
            sim::SimConfig cfg = base;
            cfg.nodes = n;
            cfg.seed = base.seed + rep;
            sim::SimNet net(cfg);
            net.fail_fraction(fraction);
            const int rounds =
                3 * static_cast<int>(std::ceil(std::log2(static_cast<double>(cfg.nodes))));
            for (int r = 0; r < rounds; ++r) net.stabilize_round();

            const auto survivors = net.overlay().live_keys();
            Rng rng = Rng(cfg.seed).split(0x6c6f6f6bull);
            int ok = 0, total = 0;
            for (int t = 0; t < opts.pairs; ++t) {
                const uint64_t src = survivors[rng.next_below(survivors.size())];
                const uint64_t dst = survivors[rng.next_below(survivors.size())];
                if (src == dst) continue;
                ++total;
                const auto res = net.route_and_learn(src, {dst, cfg.m_bits});
                if (res.status == route::RouteStatus::Delivered &&
                    res.path.hops.back().key.value == dst)
                    ++ok;
            }
            success.add(total ? static_cast<double>(ok) / total : 1.0);
        }
        char frac[32];
        std::snprintf(frac, sizeof(frac), "%g", fraction);
        detail::push_row(report, ExperimentKind::Churn,
                         "nodes=" + std::to_string(n) + ";fail=" + frac, "lookup_success", success);
    }
    return report;
}

inline MetricsReport run_experiment(const sim::SimConfig& cfg, ExperimentKind kind,
                                    ExperimentOptions& opts) {
    switch (kind) {
        case ExperimentKind::PathLength: return run_path_length(cfg, opts);
        case ExperimentKind::PeerLatency: return run_peer_latency(cfg, opts);
        case ExperimentKind::PathLatency: return run_path_latency(cfg, opts);
        case ExperimentKind::Storage: return run_storage(cfg, opts, &opts);
        case ExperimentKind::Convergence: return run_convergence(cfg, opts, &opts);
        case ExperimentKind::Overhead: return run_overhead(cfg, opts);
        default: return run_churn(cfg, opts);
    }
}

// --- comparison --------------------------------------------------------------------

struct DiffEntry {
    std::string point;
    std::string statistic;
    double a = 0.0;
    double b = 0.0;
    double delta = 0.0;
    bool within = true;
};

struct DiffSummary {
    std::vector<DiffEntry> entries;
    size_t failures = 0;
    bool all_within() const { return failures == 0; }
};

inline DiffSummary compare_report(const MetricsReport& a, const MetricsReport& b,
                                  double rel_tol = 0.05, double abs_tol = 1e-9) {
    auto keyset = [](const MetricsReport& r) {
        std::set<std::pair<std::string, std::string>> keys;
        for (const auto& row : r.rows) keys.insert({row.point, row.statistic});
        return keys;
    };
    if (a.rows.size() != b.rows.size() || keyset(a) != keyset(b))
        throw IncomparableReports("parameter grids differ");
    if (!a.rows.empty() && a.rows[0].experiment != b.rows[0].experiment)
        throw IncomparableReports("different experiments");

    DiffSummary summary;
    for (const auto& row : a.rows) {
        const ReportRow* other = b.find(row.point, row.statistic);
        DiffEntry e{row.point, row.statistic, row.value, other->value, other->value - row.value, true};
        const double tol = abs_tol + rel_tol * std::max(std::abs(row.value), std::abs(other->value));
        e.within = std::abs(e.delta) <= tol;
        if (!e.within) ++summary.failures;
        summary.entries.push_back(e);
    }
    return summary;
}

// --- declared tolerances (--check) ----------------------------------------------------

inline std::vector<std::string> check_report(ExperimentKind kind, const MetricsReport& report,
                                             const sim::SimConfig& cfg) {
    std::vector<std::string> failures;
    auto fail = [&](const std::string& msg) { failures.push_back(msg); };

    auto rows_with = [&](const std::string& stat) {
        std::vector<const ReportRow*> out;
        for (const auto& r : report.rows)
            if (r.statistic == stat) out.push_back(&r);
        return out;
    };
    auto point_field = [](const std::string& point, const std::string& key) -> std::string {
        std::istringstream ss(point);
        std::string tok;
        while (std::getline(ss, tok, ';')) {
            if (tok.rfind(key + "=", 0) == 0) return tok.substr(key.size() + 1);
        }
        return "";
    };

    switch (kind) {
        case ExperimentKind::Storage: {
            for (const auto* r : rows_with("violations"))
                if (r->value != 0.0) fail("storage bound violated at " + r->point);
            break;
        }
        case ExperimentKind::PathLength: {
            std::vector<std::pair<double, double>> fit_pts;  // (log2 N, mean hops)
            for (const auto* r : rows_with("mean_hops")) {
                const double n = std::stod(point_field(r->point, "nodes"));
                const double logn = std::log2(n);
                const std::string overlay = point_field(r->point, "overlay");
                if (overlay == "ours") {
                    if (r->value > 1.5 * logn)
                        fail("ours mean hops " + format_g9(r->value) + " > 1.5*log2(N) at " + r->point);
                    fit_pts.push_back({logn, r->value});
                } else if (overlay == "flat-chord") {
                    if (r->value < 0.4 * logn || r->value > 0.6 * logn)
                        fail("flat-chord mean hops " + format_g9(r->value) + " outside [0.4,0.6]*log2(N) at " +
                             r->point);
                }
            }
            if (fit_pts.size() >= 3) {
                double sx = 0, sy = 0, sxx = 0, sxy = 0;
                for (auto [x, y] : fit_pts) {
                    sx += x;
                    sy += y;
                    sxx += x * x;
                    sxy += x * y;
                }
                const double m = fit_pts.size();
                const double beta = (m * sxy - sx * sy) / (m * sxx - sx * sx);
                const double alpha = (sy - beta * sx) / m;
                double ss_res = 0, ss_tot = 0;
                for (auto [x, y] : fit_pts) {
                    ss_res += (y - alpha - beta * x) * (y - alpha - beta * x);
                    ss_tot += (y - sy / m) * (y - sy / m);
                }
                const double r2 = ss_tot > 0 ? 1.0 - ss_res / ss_tot : 1.0;
                if (r2 < 0.9) fail("mean hops vs log2(N) fit R^2 " + format_g9(r2) + " < 0.9");
            }
            break;
        }
        case ExperimentKind::PeerLatency: {
            const auto rows = rows_with("mean_latency");
            std::map<int, double> by_level;
            for (const auto* r : rows) by_level[std::stoi(point_field(r->point, "level"))] = r->value;
            if (by_level.count(0)) {
                const double expect = 0.52140543316 * cfg.side / cfg.base_velocity;
                if (std::abs(by_level[0] - expect) > 0.02 * expect)
                    fail("level-0 mean latency " + format_g9(by_level[0]) + " not within 2% of " +
                         format_g9(expect));
            }
            // the decay law is geometric, so the measured consecutive-level
            // ratio is the geometric mean across level pairs
            const double law = std::pow(static_cast<double>(cfg.k), -0.5);
            double log_sum = 0.0;
            int pairs = 0;
            for (int lvl = 1; by_level.count(lvl); ++lvl) {
                log_sum += std::log(by_level[lvl] / by_level[lvl - 1]);
                ++pairs;
            }
            if (pairs > 0) {
                const double ratio = std::exp(log_sum / pairs);
                if (std::abs(ratio - law) > 0.15 * law)
                    fail("consecutive-level decay ratio " + format_g9(ratio) +
                         " not within 15% of k^-1/2 = " + format_g9(law));
            }
            break;
        }
        case ExperimentKind::PathLatency: {
            double ours = -1, flat = -1;
            for (const auto* r : rows_with("mean_latency")) {
                if (point_field(r->point, "overlay") == "ours") ours = r->value;
                if (point_field(r->point, "overlay") == "flat-chord") flat = r->value;
            }
            if (ours < 0 || flat < 0)
                fail("missing overlays in path-latency report");
            else if (!(ours < flat))
                fail("ours mean latency " + format_g9(ours) + " not strictly below flat-chord " +
                     format_g9(flat));
            break;
        }
        case ExperimentKind::Churn: {
            for (const auto* r : rows_with("lookup_success")) {
                if (point_field(r->point, "fail") == "0.1" && r->value < 1.0)
                    fail("lookup success " + format_g9(r->value) + " < 1.0 after 10% failures");
            }
            break;
        }
        case ExperimentKind::Convergence:
        case ExperimentKind::Overhead: {
            const bool conv = kind == ExperimentKind::Convergence;
            const auto sat = rows_with("saturated");
            const auto msgs_c = rows_with(conv ? "msgs_clustering" : "clustering_messages");
            const auto msgs_p = rows_with(conv ? "msgs_peer_table" : "peer_table_messages");
            const auto msgs_o = rows_with(conv ? "msgs_other" : "other_messages");
            auto epoch_total = [&](size_t j) {
                return msgs_c[j]->value + msgs_p[j]->value + msgs_o[j]->value;
            };
            // once every node saturates, the rate is exactly zero forever
            for (size_t i = 0; i < sat.size(); ++i) {
                if (sat[i]->value != 1.0) continue;
                for (size_t j = i + 1; j < msgs_c.size(); ++j)
                    if (epoch_total(j) != 0)
                        fail("optimization messages after saturation at epoch " +
                             point_field(msgs_c[j]->point, "epoch"));
                break;
            }
            // and the update rate declines: last window well below the first
            const size_t w = 64;
            if (msgs_c.size() >= 2 * w) {
                double first = 0, last = 0;
                for (size_t j = 0; j < w; ++j) first += epoch_total(j);
                for (size_t j = msgs_c.size() - w; j < msgs_c.size(); ++j) last += epoch_total(j);
                if (!(last <= 0.5 * first))
                    fail("optimization rate did not decline: first window " + format_g9(first) +
                         ", last window " + format_g9(last));
            }
            break;
        }
        default: break;
    }
    return failures;
}

}  // namespace georing::bench
