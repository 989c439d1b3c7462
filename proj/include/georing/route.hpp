// Greedy best-first routing over the hierarchical ring.
//
// Each hop minimizes f = g + h: g is the measured latency EWMA toward the
// candidate, h estimates the remaining latency from the candidate to the
// target's grid cell using the velocity implied by the inter-cluster
// adjacency matrices. A hop must strictly reduce the pair
// (levels-unshared-with-target, ring distance) lexicographically; when no
// candidate qualifies the route falls back to the successor, which still
// makes clockwise progress, so routes cannot loop.

#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

#include "georing/cluster.hpp"
#include "georing/dht.hpp"
#include "georing/geokey.hpp"

namespace georing::route {

using geokey::RingKey;
using geokey::GeoPoint;

struct PathEstimate {
    double g = 0.0;  // accumulated (or next-hop) latency
    double h = 0.0;  // heuristic remaining latency
    double f() const { return g + h; }
};

struct Path {
    std::vector<dht::NodeId> hops;  // source first, destination owner last
    double total_latency = 0.0;
};

enum class RouteStatus { Delivered, TtlExceeded, RoutingStuck };

struct TraceRow {
    int hop_index = 0;
    RingKey node_key;
    double g = 0.0, h = 0.0, f = 0.0;
    double link_latency = 0.0;
};

struct RouteResult {
    RouteStatus status = RouteStatus::Delivered;
    Path path;
};

// Pheromone trail per directed overlay edge. Deposits are proportional to
// path quality (Q / latency) and decay multiplicatively.
class PheromoneTable {
public:
    explicit PheromoneTable(double rho = 0.1, double deposit = 100.0) : rho_(rho), q_(deposit) {}

    double tau(uint64_t from, uint64_t to) const {
        const auto it = trails_.find({from, to});
        return it == trails_.end() ? 0.0 : it->second;
    }

    void reinforce(const std::vector<dht::NodeId>& hops, double observed_latency) {
        if (observed_latency <= 0.0 || hops.size() < 2) return;
        const double deposit = q_ / observed_latency;
        for (size_t i = 0; i + 1 < hops.size(); ++i) {
            auto& t = trails_[{hops[i].key.value, hops[i + 1].key.value}];
            t = (1.0 - rho_) * t + deposit;
        }
    }

    // once per epoch
    void evaporate() {
        for (auto it = trails_.begin(); it != trails_.end();) {
            it->second *= (1.0 - rho_);
            if (it->second < 1e-12)
                it = trails_.erase(it);
            else
                ++it;
        }
    }

    double rho() const { return rho_; }
    double deposit_constant() const { return q_; }
    size_t size() const { return trails_.size(); }

private:
    double rho_;
    double q_;
    std::map<std::pair<uint64_t, uint64_t>, double> trails_;
};

// (src cluster, dst cluster, level) -> estimated latency, valid for a
// staleness window of epochs.
class RouteCache {
public:
    explicit RouteCache(long window = 10) : window_(window) {}

    void put(int src_cluster, int dst_cluster, int level, double value, long epoch) {
        entries_[{src_cluster, dst_cluster, level}] = {value, epoch};
    }

    std::optional<double> get(int src_cluster, int dst_cluster, int level, long epoch) const {
        const auto it = entries_.find({src_cluster, dst_cluster, level});
        if (it == entries_.end()) return std::nullopt;
        if (epoch - it->second.second > window_) return std::nullopt;
        return it->second.first;
    }

    // drop everything; estimates made under an old table must not serve
    void clear() { entries_.clear(); }

    long window() const { return window_; }

private:
    long window_;
    std::map<std::tuple<int, int, int>, std::pair<double, long>> entries_;
};

// Everything a route needs to see of the world. `sample_latency` measures an
// actual hop (jitter included); expected values feed estimates only.
struct RouteEnv {
    dht::Overlay& overlay;
    const cluster::ClusterTree& tree;
    PheromoneTable& pheromone;
    std::function<double(const GeoPoint&, const GeoPoint&)> sample_latency;
    double side = 1024.0;
    double fallback_velocity = 1.0;
    long epoch = 0;
    long adjacency_staleness = 100;
    double length_weight = 0.0;  // optional per-hop constant added to f
    bool learn = true;           // update indicators/adjacency along the way
};

// Remaining-latency estimate for a candidate hop: geometric distance to the
// target cell over the velocity implied by the deepest fresh adjacency entry
// between the candidate's and the target's clusters.
inline double heuristic(const RouteEnv& env, const dht::NodeState& node, const dht::NodeId& candidate,
                        const RingKey& target, const std::string& target_path,
                        const GeoPoint& target_center) {
    if (candidate.key == target) return 0.0;
    const int k = env.overlay.params().k;
    const int h = env.overlay.params().h;

    double velocity = env.fallback_velocity;
    for (int level = h; level >= 1; --level) {
        if (level >= static_cast<int>(node.adjacency.size())) continue;
        const int p = cluster::cluster_index(candidate.cluster_path, level, k);
        const int q = cluster::cluster_index(target_path, level, k);
        if (p == q) continue;
        const auto entry = node.adjacency[level].get(p, q);
        if (!entry || entry->latency <= 0.0) continue;
        if (env.epoch - entry->epoch > env.adjacency_staleness) continue;
        const auto* cp = cluster::find_node(env.tree.root, candidate.cluster_path.substr(0, level));
        const auto* cq = cluster::find_node(env.tree.root, target_path.substr(0, level));
        if (!cp || !cq) continue;
        const double centroid_dist = distance(cp->centroid, cq->centroid);
        if (centroid_dist <= 0.0) continue;
        velocity = centroid_dist / entry->latency;
        break;
    }
    return distance(candidate.position, target_center) / velocity;
}

struct NextHop {
    enum class Kind { Terminal, Hop, Stuck } kind = Kind::Terminal;
    dht::FingerEntry* entry = nullptr;
    PathEstimate estimate;
    bool used_fallback = false;
};

// Does this node own the target key (arc (predecessor, self])?
inline bool owns_key(const dht::NodeState& node, const RingKey& target) {
    if (node.id.key == target) return true;
    if (!node.predecessor_valid || node.predecessor == node.id.key.value) return true;
    return geokey::on_arc(RingKey{node.predecessor, node.id.key.bits}, node.id.key, target);
}

// Descent measure for the hop rule: unshared cluster levels first, then ring
// distance to the target. Every hop also moves clockwise (candidates live on
// the arc toward the target), which is what rules out revisits; the pair adds
// the requirement that a hop never leaves the target's cluster neighborhood
// or drifts ring-wise away from it.
inline std::pair<int, uint64_t> descent_pair(const dht::NodeId& id, const RingKey& target,
                                             const std::string& target_path, int h) {
    return {h - cluster::shared_prefix(id.cluster_path, target_path),
            geokey::ring_distance(id.key, target)};
}

inline NextHop next_hop(RouteEnv& env, dht::NodeState& node, const RingKey& target,
                        const std::string& target_path, const GeoPoint& target_center) {
    NextHop out;
    if (owns_key(node, target)) return out;  // Terminal

    const int h = env.overlay.params().h;
    const auto cands = dht::candidates(node.table, node.id.key, target, target_path);

    const auto pair_of = [&](const dht::NodeId& id) { return descent_pair(id, target, target_path, h); };
    const auto current = pair_of(node.id);

    // Estimated cost per unit of ring progress. Plain min-f degenerates here:
    // f is nearly flat along the geodesic, so the shortest hop always wins by
    // a hair and routes crawl node by node. Normalizing by clockwise progress
    // keeps the f-ordering between comparable hops (equal progress reduces it
    // to min f) while making a finger that halves the remaining ring beat a
    // micro-hop whose f is equal.
    dht::FingerEntry* best = nullptr;
    double best_ratio = 0.0, best_tau = 0.0;
    PathEstimate best_est;
    for (const auto* c : cands) {
        if (!env.overlay.is_live(c->peer.key.value)) continue;
        if (!(pair_of(c->peer) < current)) continue;  // must strictly descend
        PathEstimate est{c->indicators.latency_ewma,
                         heuristic(env, node, c->peer, target, target_path, target_center)};
        const double f = est.f() + env.length_weight;
        const double progress =
            static_cast<double>(geokey::clockwise_distance(node.id.key, c->peer.key));
        const double ratio = f / progress;
        const double tau = env.pheromone.tau(node.id.key.value, c->peer.key.value);
        auto* entry = const_cast<dht::FingerEntry*>(c);
        if (!best || ratio < best_ratio || (ratio == best_ratio && tau > best_tau) ||
            (ratio == best_ratio && tau == best_tau && entry->peer.key.value < best->peer.key.value)) {
            best = entry;
            best_ratio = ratio;
            best_tau = tau;
            best_est = est;
        }
    }
    if (best) {
        out.kind = NextHop::Kind::Hop;
        out.entry = best;
        out.estimate = best_est;
        return out;
    }

    // fall back to the successor list: the farthest live entry that does not
    // overshoot the target, or the first live one when all else fails
    dht::FingerEntry* fallback = nullptr;
    uint64_t fallback_prog = 0;
    dht::FingerEntry* first_live = nullptr;
    for (auto& e : node.table.successors) {
        if (e.peer.key == node.id.key) break;
        if (!env.overlay.is_live(e.peer.key.value)) continue;
        if (!first_live) first_live = &e;
        if (!geokey::on_arc(node.id.key, target, e.peer.key)) continue;
        const uint64_t prog = geokey::clockwise_distance(node.id.key, e.peer.key);
        if (prog > fallback_prog) {
            fallback_prog = prog;
            fallback = &e;
        }
    }
    if (!fallback) fallback = first_live;
    if (fallback) {
        out.kind = NextHop::Kind::Hop;
        out.entry = fallback;
        out.estimate = {fallback->indicators.latency_ewma,
                        heuristic(env, node, fallback->peer, target, target_path, target_center)};
        out.used_fallback = true;
        return out;
    }
    out.kind = NextHop::Kind::Stuck;
    return out;
}

inline int default_ttl(size_t live_nodes) {
    return 4 * static_cast<int>(std::ceil(std::log2(static_cast<double>(std::max<size_t>(live_nodes, 2)))));
}

// Iterated next_hop from src toward the owner of target. Per-hop latency
// samples feed the chooser's indicators and adjacency matrices.
inline RouteResult route(RouteEnv& env, uint64_t src_key, const RingKey& target, int ttl = -1,
                         std::vector<TraceRow>* trace = nullptr) {
    RouteResult res;
    dht::NodeState* cur = &env.overlay.state(src_key);
    if (!cur->alive) throw UnknownNode("source not live");
    if (ttl < 0) ttl = default_ttl(env.overlay.live_count());

    const std::string target_path =
        cluster::cluster_path(env.tree, geokey::key_to_cell_center(target, env.side));
    const GeoPoint target_center = geokey::key_to_cell_center(target, env.side);
    if (env.learn) {
        cur->traffic_log.push_back({target, 1.0});
        if (cur->traffic_log.size() > 512)  // keep a bounded recent window
            cur->traffic_log.erase(cur->traffic_log.begin(),
                                   cur->traffic_log.begin() + cur->traffic_log.size() / 2);
    }

    res.path.hops.push_back(cur->id);
    const int k = env.overlay.params().k;
    for (int hop = 0; hop < ttl; ++hop) {
        NextHop nh = next_hop(env, *cur, target, target_path, target_center);
        if (nh.kind == NextHop::Kind::Terminal) {
            res.status = RouteStatus::Delivered;
            return res;
        }
        if (nh.kind == NextHop::Kind::Stuck) {
            res.status = RouteStatus::RoutingStuck;
            return res;
        }
        dht::NodeState& next = env.overlay.state(nh.entry->peer.key.value);
        const double latency = env.sample_latency(cur->id.position, next.id.position);
        res.path.total_latency += latency;
        if (env.learn) {
            dht::update_indicator(nh.entry->indicators, latency, true);
            for (int level = 1; level <= env.overlay.params().h &&
                                level < static_cast<int>(cur->adjacency.size());
                 ++level) {
                const int p = cluster::cluster_index(cur->id.cluster_path, level, k);
                const int q = cluster::cluster_index(next.id.cluster_path, level, k);
                if (p != q) cur->adjacency[level].update(p, q, latency, env.epoch);
            }
        }
        if (trace)
            trace->push_back({hop, nh.entry->peer.key, nh.estimate.g, nh.estimate.h,
                              nh.estimate.f() + env.length_weight, latency});
        res.path.hops.push_back(next.id);
        cur = &next;
    }
    res.status = RouteStatus::TtlExceeded;
    return res;
}

// Route trace CSV (one row per hop).
inline std::string trace_to_csv(const std::vector<TraceRow>& rows) {
    std::string out = "hop,node_key,g,h,f,link_latency\n";
    char buf[160];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof(buf), "%d,%s,%.9g,%.9g,%.9g,%.9g\n", r.hop_index,
                      r.node_key.hex().c_str(), r.g, r.h, r.f, r.link_latency);
        out += buf;
    }
    return out;
}

}  // namespace georing::route
