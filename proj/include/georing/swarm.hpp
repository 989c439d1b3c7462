// Decentralized table optimization.
//
// Every node runs one PSO particle whose position encodes its routing-table
// parameters: one ring-fraction per finger slot plus a neighborhood latency
// weight. Fitness is the traffic-weighted estimated path latency plus penalty
// terms for structural constraints. Nodes cycle through exploration
// (sample peers, move the particle), validation (accept only if a fresh
// traffic sample shows a real improvement), and diffusion (push the accepted
// position and fresh adjacency rows to cluster neighbors). Stalls double the
// update interval until sends cease entirely.

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "georing/cluster.hpp"
#include "georing/dht.hpp"
#include "georing/errors.hpp"
#include "georing/route.hpp"
#include "georing/rng.hpp"

namespace georing::swarm {

using geokey::RingKey;
using geokey::GeoPoint;

// --- particle ---------------------------------------------------------------

struct PsoParams {
    double omega = 0.729;  // constriction-style inertia
    double c1 = 1.49445;
    double c2 = 1.49445;
};

struct Bound {
    double lo = 0.0;
    double hi = 1.0;
};

struct Particle {
    std::vector<double> position;
    std::vector<double> velocity;
    std::vector<double> pbest;
    double pbest_fitness = std::numeric_limits<double>::max();

    void offer_pbest(const std::vector<double>& pos, double fitness) {
        if (fitness <= pbest_fitness) {
            pbest = pos;
            pbest_fitness = fitness;
        }
    }
};

// v <- w v + c1 r1 (pbest - x) + c2 r2 (gbest - x); x <- clamp(x + v).
// r1 is drawn before r2 for every dimension, so runs replay exactly.
inline void pso_step(Particle& p, const std::vector<double>& gbest, const PsoParams& params,
                     const std::vector<Bound>& bounds, Rng& rng) {
    const size_t d = p.position.size();
    if (p.velocity.size() != d || p.pbest.size() != d || gbest.size() != d || bounds.size() != d)
        throw DimensionError();
    for (size_t i = 0; i < d; ++i) {
        const double r1 = rng.next_double();
        const double r2 = rng.next_double();
        p.velocity[i] = params.omega * p.velocity[i] + params.c1 * r1 * (p.pbest[i] - p.position[i]) +
                        params.c2 * r2 * (gbest[i] - p.position[i]);
        p.position[i] = std::clamp(p.position[i] + p.velocity[i], bounds[i].lo, bounds[i].hi);
    }
}

// --- position encoding -------------------------------------------------------

// layout: one ring fraction per finger rung (level-major), then the
// neighborhood latency weight as the last dimension
inline std::vector<std::pair<int, int>> finger_slots(int k, int h, int m_bits) {
    return dht::finger_rungs(k, h, m_bits);
}

inline size_t position_dim(int k, int h, int m_bits) { return finger_slots(k, h, m_bits).size() + 1; }

// the geographic default: offset 2^(m-j) as a fraction of the ring, weight 1
// (pure latency-driven neighborhood)
inline std::vector<double> geographic_position(int k, int h, int m_bits) {
    const auto slots = finger_slots(k, h, m_bits);
    std::vector<double> pos;
    pos.reserve(slots.size() + 1);
    for (const auto& [lvl, rung] : slots) pos.push_back(std::pow(0.5, rung));
    pos.push_back(1.0);
    return pos;
}

inline std::vector<Bound> position_bounds(int k, int h, int m_bits) {
    return std::vector<Bound>(position_dim(k, h, m_bits), Bound{0.0, 1.0});
}

// Materialize a concrete routing table from a position vector. Fractions
// resolve to live owners; the neighborhood weight trades measured latency
// against ring closeness.
inline dht::RoutingTable materialize_table(const dht::Overlay& overlay, const dht::NodeState& self,
                                           const std::vector<double>& position) {
    const auto& params = overlay.params();
    const auto slots = finger_slots(params.k, params.h, params.m_bits);
    if (position.size() != slots.size() + 1) throw DimensionError();
    const uint64_t mask = geokey::ring_mask(params.m_bits);
    const double span = std::pow(2.0, params.m_bits);

    dht::RoutingTable table;
    table.levels.assign(params.h + 1, {});
    for (size_t s = 0; s < slots.size(); ++s) {
        const int lvl = slots[s].first;
        const uint64_t offset = static_cast<uint64_t>(std::llround(position[s] * span)) & mask;
        const uint64_t target = (self.id.key.value + offset) & mask;
        const dht::NodeState* owner = overlay.owner_of(target);
        if (!owner || owner->id.key == self.id.key) continue;
        auto& bucket = table.levels[lvl];
        bool dup = false;
        for (const auto& e : bucket)
            if (e.peer.key == owner->id.key) dup = true;
        if (dup) continue;
        dht::FingerEntry entry{owner->id, {}};
        dht::update_indicator(entry.indicators,
                              overlay.expected_latency(self.id.position, owner->id.position), true);
        entry.indicators.usage_count = 0;
        bucket.push_back(entry);
    }

    // neighborhood scored by w * latency + (1 - w) * ring distance (normalized)
    const double w = position.back();
    struct Scored {
        double score;
        uint64_t key;
        const dht::NodeState* st;
        double latency;
    };
    std::vector<Scored> scored;
    double max_lat = 1e-12;
    for (const auto& [key, st] : overlay.nodes()) {
        if (!st.alive || key == self.id.key.value) continue;
        const double lat = overlay.expected_latency(self.id.position, st.id.position);
        max_lat = std::max(max_lat, lat);
        scored.push_back({0.0, key, &st, lat});
    }
    const double half_ring = std::pow(2.0, params.m_bits - 1);
    for (auto& s : scored) {
        const double ring_norm =
            static_cast<double>(geokey::ring_distance(self.id.key, s.st->id.key)) / half_ring;
        s.score = w * (s.latency / max_lat) + (1.0 - w) * ring_norm;
    }
    std::sort(scored.begin(), scored.end(), [](const Scored& a, const Scored& b) {
        if (a.score != b.score) return a.score < b.score;
        return a.key < b.key;
    });
    for (const auto& s : scored) {
        if (static_cast<int>(table.neighbors.size()) >= params.M) break;
        dht::FingerEntry entry{s.st->id, {}};
        dht::update_indicator(entry.indicators, s.latency, true);
        entry.indicators.usage_count = 0;
        table.neighbors.push_back(entry);
    }

    // successor list is maintenance state, not an optimization target
    table.successors = self.table.successors;
    return table;
}

// --- fitness -----------------------------------------------------------------

struct Objective {
    double lambda = 1e6;  // penalty per constraint violation unit
    double delta = 0.01;  // relative improvement required to accept
    int validation_samples = 30;
    int exploration_peers = 8;
    int quick_samples = 8;
    long interval_cap = 64;
};

struct TrafficSample {
    RingKey target;
    double weight = 1.0;
};

// Dry-run greedy walk over current node state: the candidate table chooses
// the first hop, the real tables route the rest. Costs are entry latency
// estimates, never fresh measurements.
inline double estimated_path_latency(route::RouteEnv& env, dht::NodeState& src,
                                     dht::RoutingTable& candidate_table, const RingKey& target) {
    const bool learn_save = env.learn;
    env.learn = false;
    std::swap(src.table, candidate_table);

    const GeoPoint center = geokey::key_to_cell_center(target, env.side);
    const std::string tpath = cluster::cluster_path(env.tree, center);
    const int ttl = route::default_ttl(env.overlay.live_count());
    const double fail_cost = 4.0 * env.side / env.fallback_velocity * ttl;

    double total = 0.0;
    dht::NodeState* cur = &src;
    bool ok = false;
    for (int hop = 0; hop <= ttl; ++hop) {
        auto nh = route::next_hop(env, *cur, target, tpath, center);
        if (nh.kind == route::NextHop::Kind::Terminal) {
            ok = true;
            break;
        }
        if (nh.kind == route::NextHop::Kind::Stuck) break;
        total += nh.entry->indicators.latency_ewma;
        cur = &env.overlay.state(nh.entry->peer.key.value);
    }
    std::swap(src.table, candidate_table);
    env.learn = learn_save;
    return ok ? total : fail_cost;
}

// violation deficits: (a) empty finger levels 1..h, (b) neighborhood below M,
// (c) fingers beyond the table-size bound
inline double constraint_violations(const dht::Overlay& overlay, const dht::RoutingTable& table) {
    const auto& p = overlay.params();
    double v = 0.0;
    const int reachable = static_cast<int>(overlay.live_count()) - 1;
    if (reachable > 0) {
        for (int lvl = 1; lvl <= p.h; ++lvl)
            if (table.levels[lvl].empty()) v += 1.0;
        v += std::max(0, std::min(p.M, reachable) - static_cast<int>(table.neighbors.size()));
    }
    v += std::max(0, static_cast<int>(table.finger_count()) - dht::finger_capacity(p.k, p.h));
    return v;
}

inline double fitness(route::RouteEnv& env, dht::NodeState& node, const std::vector<double>& position,
                      const std::vector<TrafficSample>& traffic, const Objective& objective) {
    dht::RoutingTable table = materialize_table(env.overlay, node, position);
    double f = objective.lambda * constraint_violations(env.overlay, table);
    for (const auto& t : traffic) f += t.weight * estimated_path_latency(env, node, table, t.target);
    return f;
}

// --- network estimates ---------------------------------------------------------

struct NetworkEstimate {
    cluster::Gmm population;
    cluster::Gmm traffic;
    bool valid = false;
};

// Refit both mixtures from fresh samples, seeded from the previous estimate
// when one exists (assign samples to the nearest previous mean).
inline void update_estimates(NetworkEstimate& est, const std::vector<Vec2>& peer_positions,
                             const std::vector<Vec2>& flow_midpoints, int k, uint64_t seed) {
    auto refit = [&](cluster::Gmm& gmm, const std::vector<Vec2>& samples) {
        if (samples.empty()) return;
        const int kk = std::max(1, std::min<int>(k, static_cast<int>(cluster::count_distinct(samples))));
        cluster::KmeansResult init;
        if (gmm.components.size() == static_cast<size_t>(kk)) {
            // incremental: seed assignments from the previous component means
            init.centroids.reserve(kk);
            for (const auto& c : gmm.components) init.centroids.push_back(c.gaussian.mean);
            init.assignments.resize(samples.size());
            for (size_t i = 0; i < samples.size(); ++i) {
                int best = 0;
                double bd = (samples[i] - init.centroids[0]).norm2();
                for (int c = 1; c < kk; ++c) {
                    const double d = (samples[i] - init.centroids[c]).norm2();
                    if (d < bd) {
                        bd = d;
                        best = c;
                    }
                }
                init.assignments[i] = best;
            }
        } else {
            init = cluster::kmeans(samples, kk, seed);
        }
        gmm = cluster::em_fit(samples, kk, init);
    };
    refit(est.population, peer_positions);
    refit(est.traffic, flow_midpoints);
    est.valid = true;
}

// --- overhead accounting ---------------------------------------------------------

enum class OverheadCategory { Clustering, PeerTable, Routing, Other };
constexpr int kOverheadCategories = 4;

struct OverheadEvent {
    OverheadCategory category = OverheadCategory::Other;
    long recipients = 1;
    long units_each = 1;

    // clustering diffusion: k units of mixture data to log2(N) recipients
    static OverheadEvent clustering(size_t n, int k) {
        return {OverheadCategory::Clustering, log2_recipients(n), k};
    }
    // peer-table diffusion: log2(N) units to log2(N) recipients
    static OverheadEvent peer_table(size_t n) {
        return {OverheadCategory::PeerTable, log2_recipients(n), log2_recipients(n)};
    }
    static OverheadEvent routing(long messages) { return {OverheadCategory::Routing, messages, 1}; }
    static OverheadEvent other(long messages) { return {OverheadCategory::Other, messages, 1}; }

    static long log2_recipients(size_t n) {
        return static_cast<long>(std::ceil(std::log2(static_cast<double>(std::max<size_t>(n, 2)))));
    }
};

class OverheadCounters {
public:
    struct Bucket {
        long messages = 0;
        long units = 0;
    };

    void account(const OverheadEvent& e) {
        auto& total = totals_[index(e.category)];
        auto& epoch = epoch_[index(e.category)];
        total.messages += e.recipients;
        total.units += e.recipients * e.units_each;
        epoch.messages += e.recipients;
        epoch.units += e.recipients * e.units_each;
    }

    // close the current epoch and start a new one
    void roll_epoch() {
        history_.push_back(epoch_);
        epoch_ = {};
    }

    const Bucket& total(OverheadCategory c) const { return totals_[index(c)]; }
    const Bucket& current_epoch(OverheadCategory c) const { return epoch_[index(c)]; }
    const std::vector<std::array<Bucket, kOverheadCategories>>& history() const { return history_; }

    long epoch_messages_all() const {
        long m = 0;
        for (const auto& b : epoch_) m += b.messages;
        return m;
    }

private:
    static size_t index(OverheadCategory c) { return static_cast<size_t>(c); }

    std::array<Bucket, kOverheadCategories> totals_{};
    std::array<Bucket, kOverheadCategories> epoch_{};
    std::vector<std::array<Bucket, kOverheadCategories>> history_;
};

// --- phase machine ---------------------------------------------------------------

enum class Phase { Exploration, Validation, Diffusion };

inline const char* phase_name(Phase p) {
    switch (p) {
        case Phase::Exploration: return "exploration";
        case Phase::Validation: return "validation";
        default: return "diffusion";
    }
}

struct SwarmState {
    Particle particle;
    std::vector<double> gbest;
    double gbest_fitness = std::numeric_limits<double>::max();
    std::vector<double> live_position;  // what the node's real table is built from
    Phase phase = Phase::Exploration;
    int stall_count = 0;
    long interval = 1;
    long last_accept_epoch = -1;
    long messages_this_epoch = 0;
    NetworkEstimate estimate;
    route::RouteCache cache;

    bool saturated(long cap) const { return interval >= cap; }

    // gbest fitness is monotone by construction: only min() updates land
    void offer_gbest(const std::vector<double>& pos, double fit) {
        if (fit < gbest_fitness) {
            gbest = pos;
            gbest_fitness = fit;
        }
    }
};

struct SwarmContext {
    dht::Overlay& overlay;
    const cluster::ClusterTree& tree;
    route::PheromoneTable& pheromone;
    std::map<uint64_t, SwarmState>& states;
    OverheadCounters& counters;
    double side = 1024.0;
    double fallback_velocity = 1.0;
    long epoch = 0;
    PsoParams pso;
    Objective objective;
};

// Particles start on the geographic position but with a random velocity;
// position = pbest = gbest with zero velocity is a PSO fixed point and would
// never explore anything.
inline SwarmState init_swarm_state(const dht::Overlay& overlay, Rng& rng) {
    const auto& p = overlay.params();
    SwarmState st;
    st.particle.position = geographic_position(p.k, p.h, p.m_bits);
    st.particle.velocity.resize(st.particle.position.size());
    for (auto& v : st.particle.velocity) v = 0.05 * rng.uniform(-1.0, 1.0);
    st.particle.pbest = st.particle.position;
    st.gbest = st.particle.position;
    st.live_position = st.particle.position;
    return st;
}

namespace detail {

inline route::RouteEnv estimation_env(SwarmContext& ctx) {
    return route::RouteEnv{ctx.overlay,
                           ctx.tree,
                           ctx.pheromone,
                           [&ov = ctx.overlay](const GeoPoint& a, const GeoPoint& b) {
                               return ov.expected_latency(a, b);
                           },
                           ctx.side,
                           ctx.fallback_velocity,
                           ctx.epoch,
                           100,
                           0.0,
                           false};
}

// draw targets from the node's recorded sends; deterministic given rng
inline std::vector<TrafficSample> draw_traffic(const dht::NodeState& node, int n, Rng& rng) {
    std::vector<TrafficSample> out;
    if (node.traffic_log.empty()) return out;
    for (int i = 0; i < n; ++i) {
        const auto& pick = node.traffic_log[rng.next_below(node.traffic_log.size())];
        out.push_back({pick.first, pick.second});
    }
    return out;
}

inline std::vector<uint64_t> sample_peers(const dht::Overlay& overlay, uint64_t self, int r, Rng& rng) {
    std::vector<uint64_t> live = overlay.live_keys();
    live.erase(std::remove(live.begin(), live.end(), self), live.end());
    std::vector<uint64_t> out;
    for (int i = 0; i < r && !live.empty(); ++i) {
        const size_t j = rng.next_below(live.size());
        out.push_back(live[j]);
        live.erase(live.begin() + j);
    }
    return out;
}

// diffusion recipients: same-leaf table peers plus one contact per sibling
// cluster at every level
inline std::vector<uint64_t> diffusion_recipients(const dht::Overlay& overlay,
                                                  const dht::NodeState& node) {
    std::vector<uint64_t> out;
    auto push = [&](uint64_t key) {
        if (key == node.id.key.value) return;
        if (std::find(out.begin(), out.end(), key) != out.end()) return;
        if (!overlay.is_live(key)) return;
        out.push_back(key);
    };
    auto each_entry = [&](auto&& fn) {
        for (const auto& b : node.table.levels)
            for (const auto& e : b) fn(e);
        for (const auto& e : node.table.neighbors) fn(e);
        for (const auto& e : node.table.successors) fn(e);
    };
    // same-cluster neighbors
    each_entry([&](const dht::FingerEntry& e) {
        if (e.peer.cluster_path == node.id.cluster_path) push(e.peer.key.value);
    });
    // one contact per sibling cluster per level
    const std::string& path = node.id.cluster_path;
    const int k = overlay.params().k;
    for (size_t lvl = 1; lvl <= path.size(); ++lvl) {
        for (int d = 0; d < k; ++d) {
            const char digit = cluster::digit_char(d);
            if (digit == path[lvl - 1]) continue;
            const std::string sibling = path.substr(0, lvl - 1) + digit;
            uint64_t found = 0;
            bool has = false;
            each_entry([&](const dht::FingerEntry& e) {
                if (has) return;
                if (e.peer.cluster_path.compare(0, sibling.size(), sibling) == 0) {
                    found = e.peer.key.value;
                    has = true;
                }
            });
            if (has) push(found);
        }
    }
    return out;
}

}  // namespace detail

// One optimization cycle (exploration -> validation -> diffusion/stall) for
// one node. Returns true when the candidate was accepted.
inline bool phase_step(SwarmContext& ctx, uint64_t node_key, Rng& rng) {
    SwarmState& sw = ctx.states.at(node_key);
    if (sw.saturated(ctx.objective.interval_cap)) return false;
    dht::NodeState& node = ctx.overlay.state(node_key);
    if (!node.alive) return false;
    auto env = detail::estimation_env(ctx);
    sw.messages_this_epoch = 0;

    // --- exploration ---
    sw.phase = Phase::Exploration;
    const auto peers = detail::sample_peers(ctx.overlay, node_key, ctx.objective.exploration_peers, rng);
    std::vector<Vec2> peer_positions;
    for (uint64_t pk : peers) {
        const dht::NodeState& peer = ctx.overlay.state(pk);
        peer_positions.push_back(peer.id.position);
        for (size_t lvl = 1; lvl < node.adjacency.size() && lvl < peer.adjacency.size(); ++lvl)
            node.adjacency[lvl].merge_newer(peer.adjacency[lvl]);
    }
    ctx.counters.account(OverheadEvent::other(static_cast<long>(peers.size())));
    sw.messages_this_epoch += static_cast<long>(peers.size());

    // refresh the population / traffic mixtures from what we just saw
    std::vector<Vec2> midpoints;
    for (const auto& [target, weight] : node.traffic_log) {
        const Vec2 c = geokey::key_to_cell_center(target, ctx.side);
        midpoints.push_back((node.id.position + c) * 0.5);
    }
    update_estimates(sw.estimate, peer_positions, midpoints, ctx.overlay.params().k,
                     hash_combine(node_key, static_cast<uint64_t>(ctx.epoch)));

    const auto quick = detail::draw_traffic(node, ctx.objective.quick_samples, rng);
    const auto bounds = position_bounds(ctx.overlay.params().k, ctx.overlay.params().h,
                                        ctx.overlay.params().m_bits);

    // first cycle: score the inherited geographic table
    if (sw.gbest_fitness == std::numeric_limits<double>::max()) {
        const double f0 = fitness(env, node, sw.gbest, quick, ctx.objective);
        sw.gbest_fitness = f0;
        sw.particle.pbest_fitness = f0;
    }

    // re-energize a fully settled particle so exploration keeps its random
    // element (stalls only slow the cycle, they do not end the search)
    double vnorm = 0.0;
    for (double v : sw.particle.velocity) vnorm += std::abs(v);
    if (vnorm < 1e-6)
        for (auto& v : sw.particle.velocity) v = 0.05 * rng.uniform(-1.0, 1.0);

    pso_step(sw.particle, sw.gbest, ctx.pso, bounds, rng);
    const double cand_fit = fitness(env, node, sw.particle.position, quick, ctx.objective);
    sw.particle.offer_pbest(sw.particle.position, cand_fit);
    sw.offer_gbest(sw.particle.position, cand_fit);

    // remote candidates picked up while sampling, plus the node's own gbest
    // (it may have arrived via diffusion and never been applied yet)
    std::vector<double> best_new = sw.particle.position;
    double best_new_fit = cand_fit;
    auto consider = [&](const std::vector<double>& pos, double f) {
        if (f < best_new_fit) {
            best_new = pos;
            best_new_fit = f;
        }
    };
    consider(sw.gbest, fitness(env, node, sw.gbest, quick, ctx.objective));
    for (uint64_t pk : peers) {
        const auto it = ctx.states.find(pk);
        if (it == ctx.states.end() || it->second.gbest_fitness == std::numeric_limits<double>::max())
            continue;
        consider(it->second.gbest, fitness(env, node, it->second.gbest, quick, ctx.objective));
    }

    // --- validation (law of large numbers: fresh sample mean) ---
    // A candidate replaces the live table only when a fresh traffic sample
    // shows a real improvement over what the table currently is. Estimates
    // for the live table are cached per target cluster; entries die with the
    // table or the staleness window.
    sw.phase = Phase::Validation;
    bool accepted = false;
    if (best_new != sw.live_position) {
        auto validation = detail::draw_traffic(node, ctx.objective.validation_samples, rng);
        if (validation.empty()) validation = quick;
        const double mean_cand = fitness(env, node, best_new, validation, ctx.objective) /
                                 std::max<size_t>(validation.size(), 1);

        dht::RoutingTable live_table = materialize_table(ctx.overlay, node, sw.live_position);
        const int h = ctx.overlay.params().h;
        const int self_cluster = cluster::cluster_index(node.id.cluster_path, h, ctx.overlay.params().k);
        double cur_sum = ctx.objective.lambda * constraint_violations(ctx.overlay, live_table);
        for (const auto& t : validation) {
            const GeoPoint center = geokey::key_to_cell_center(t.target, ctx.side);
            const int dst_cluster = cluster::cluster_index(cluster::cluster_path(ctx.tree, center), h,
                                                           ctx.overlay.params().k);
            double est;
            if (const auto hit = sw.cache.get(self_cluster, dst_cluster, h, ctx.epoch)) {
                est = *hit;
            } else {
                est = estimated_path_latency(env, node, live_table, t.target);
                sw.cache.put(self_cluster, dst_cluster, h, est, ctx.epoch);
            }
            cur_sum += t.weight * est;
        }
        const double mean_cur = cur_sum / std::max<size_t>(validation.size(), 1);
        accepted = mean_cur > 0.0 && (mean_cur - mean_cand) > ctx.objective.delta * mean_cur;
        if (accepted) {
            sw.offer_gbest(best_new, best_new_fit);
            sw.live_position = best_new;
            node.table = materialize_table(ctx.overlay, node, sw.live_position);
            sw.cache.clear();
        }
    }

    // --- diffusion or stall ---
    if (accepted) {
        sw.phase = Phase::Diffusion;
        sw.stall_count = 0;
        sw.interval = 1;
        sw.last_accept_epoch = ctx.epoch;
        const size_t n = ctx.overlay.live_count();
        ctx.counters.account(OverheadEvent::peer_table(n));
        ctx.counters.account(OverheadEvent::clustering(n, ctx.overlay.params().k));
        sw.messages_this_epoch +=
            OverheadEvent::peer_table(n).recipients + OverheadEvent::clustering(n, ctx.overlay.params().k).recipients;

        for (uint64_t rk : detail::diffusion_recipients(ctx.overlay, node)) {
            auto it = ctx.states.find(rk);
            if (it == ctx.states.end()) continue;
            SwarmState& other = it->second;
            dht::NodeState& other_node = ctx.overlay.state(rk);
            // share adjacency rows
            for (size_t lvl = 1; lvl < other_node.adjacency.size() && lvl < node.adjacency.size(); ++lvl)
                other_node.adjacency[lvl].merge_newer(node.adjacency[lvl]);
            // recipients min-update their bests when the position helps their
            // own traffic; their live table only changes through their own
            // validated accept, so diffusion cannot inject unvalidated tables
            Rng peer_rng = rng.split(rk);
            const auto peer_quick = detail::draw_traffic(other_node, ctx.objective.quick_samples, peer_rng);
            const double f = fitness(env, other_node, sw.gbest, peer_quick, ctx.objective);
            if (f < other.gbest_fitness) {
                other.offer_gbest(sw.gbest, f);
                other.particle.offer_pbest(sw.gbest, f);
            }
        }
    } else {
        ++sw.stall_count;
        sw.interval = std::min(sw.interval * 2, ctx.objective.interval_cap);
    }
    return accepted;
}

}  // namespace georing::swarm
