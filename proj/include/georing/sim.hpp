// Deterministic discrete-event network simulator.
//
// A SimNet owns one overlay over uniform random positions, a planar latency
// field (per-quadrant velocity multipliers), lossy FEC-framed transport, a
// hierarchical broadcast, churn, and the two location-agnostic baseline
// routers used for comparison. Identical (seed, config) reproduces identical
// event traces byte for byte; every random draw comes from streams derived
// from the config seed.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <queue>
#include <set>
#include <string>
#include <vector>

#include "georing/cluster.hpp"
#include "georing/dht.hpp"
#include "georing/errors.hpp"
#include "georing/geokey.hpp"
#include "georing/rng.hpp"
#include "georing/route.hpp"
#include "georing/swarm.hpp"

namespace georing::sim {

using geokey::GeoPoint;
using geokey::RingKey;

// --- config -------------------------------------------------------------------

struct ChurnSchedule {
    double join_rate = 0.0;   // expected joins per epoch (Poisson)
    double leave_rate = 0.0;  // graceful departures per epoch
    double fail_rate = 0.0;   // silent failures per epoch
};

struct SimConfig {
    uint64_t seed = 1;
    int nodes = 64;
    double side = 1024.0;      // region side, meters
    int m_bits = 32;
    int k = 2;
    int h = 0;                 // 0 = derive from nodes
    int M = 4;
    double loss = 0.0;         // per-shard loss probability
    double jitter = 0.0;       // uniform [0, jitter) per message
    double base_velocity = 1.0;
    std::vector<double> velocity_grid{1.0};  // g x g multipliers, row-major
    ChurnSchedule churn;
    double route_length_weight = 0.0;
    size_t event_cap = 4'000'000;

    int height() const {
        if (h > 0) return h;
        const int derived = static_cast<int>(
            std::lround(std::log2(std::max(2.0, static_cast<double>(nodes))) /
                        (2.0 * std::log2(static_cast<double>(std::max(2, k))))));
        return std::clamp(derived, 1, 8);
    }

    void validate() const {
        if (nodes < 1) throw ConfigError("nodes must be >= 1");
        if (side <= 0) throw ConfigError("side must be positive");
        if (m_bits < 2 || m_bits > 62 || (m_bits & 1)) throw ConfigError("m_bits must be even, 2..62");
        if (k < 2) throw ConfigError("k must be >= 2");
        if (loss < 0 || loss >= 1) throw ConfigError("loss must be in [0,1)");
        if (jitter < 0) throw ConfigError("jitter must be >= 0");
        if (base_velocity <= 0) throw ConfigError("velocity must be positive");
        const auto g = static_cast<size_t>(std::lround(std::sqrt(static_cast<double>(velocity_grid.size()))));
        if (g * g != velocity_grid.size() || velocity_grid.empty())
            throw ConfigError("velocity_grid must hold a square number of multipliers");
        for (double v : velocity_grid)
            if (v <= 0) throw ConfigError("velocity multipliers must be positive");
        if (churn.join_rate < 0 || churn.leave_rate < 0 || churn.fail_rate < 0)
            throw ConfigError("churn rates must be >= 0");
    }
};

// --- link model ----------------------------------------------------------------

// latency(a, b) = dist / (base_velocity * multiplier at segment midpoint) + jitter
class LinkModel {
public:
    LinkModel() = default;
    LinkModel(double side, double base_velocity, std::vector<double> grid, double jitter)
        : side_(side),
          base_velocity_(base_velocity),
          grid_(std::move(grid)),
          dim_(static_cast<int>(std::lround(std::sqrt(static_cast<double>(grid_.size()))))),
          jitter_(jitter) {}

    double velocity_at(const GeoPoint& p) const {
        const int gx = std::min(dim_ - 1, static_cast<int>(p.x * dim_ / side_));
        const int gy = std::min(dim_ - 1, static_cast<int>(p.y * dim_ / side_));
        return base_velocity_ * grid_[static_cast<size_t>(gy) * dim_ + gx];
    }

    double expected_latency(const GeoPoint& a, const GeoPoint& b) const {
        const GeoPoint mid{(a.x + b.x) / 2.0, (a.y + b.y) / 2.0};
        return distance(a, b) / velocity_at(mid);
    }

    double sample_latency(const GeoPoint& a, const GeoPoint& b, Rng& rng) const {
        const double base = expected_latency(a, b);
        return jitter_ > 0.0 ? base + rng.uniform(0.0, jitter_) : base;
    }

    double jitter() const { return jitter_; }

private:
    double side_ = 1.0;
    double base_velocity_ = 1.0;
    std::vector<double> grid_{1.0};
    int dim_ = 1;
    double jitter_ = 0.0;
};

inline double link_latency(const GeoPoint& a, const GeoPoint& b, const LinkModel& model, Rng& rng) {
    return model.sample_latency(a, b, rng);
}

// --- FEC -----------------------------------------------------------------------

// Systematic single-parity erasure frame: k equal-length data shards
// (zero-padded) plus one XOR parity shard. Any k of the k+1 reconstruct.
struct Shard {
    uint64_t frame_id = 0;
    int index = 0;  // 0..k-1 data, k parity
    int k = 1;
    size_t payload_len = 0;
    std::vector<uint8_t> bytes;
};

struct FecFrame {
    uint64_t frame_id = 0;
    int k = 1;
    size_t payload_len = 0;
    std::vector<Shard> shards;  // k data + 1 parity
};

inline FecFrame fec_encode(const std::vector<uint8_t>& payload, int k, uint64_t frame_id = 0) {
    if (k < 1) throw ConfigError("k must be >= 1");
    FecFrame frame;
    frame.frame_id = frame_id;
    frame.k = k;
    frame.payload_len = payload.size();
    const size_t shard_len = (payload.size() + k - 1) / k;
    std::vector<uint8_t> parity(shard_len, 0);
    for (int i = 0; i < k; ++i) {
        Shard s{frame_id, i, k, payload.size(), std::vector<uint8_t>(shard_len, 0)};
        for (size_t b = 0; b < shard_len; ++b) {
            const size_t at = static_cast<size_t>(i) * shard_len + b;
            s.bytes[b] = at < payload.size() ? payload[at] : 0;
            parity[b] ^= s.bytes[b];
        }
        frame.shards.push_back(std::move(s));
    }
    frame.shards.push_back(Shard{frame_id, k, k, payload.size(), std::move(parity)});
    return frame;
}

inline std::vector<uint8_t> fec_decode(const std::vector<Shard>& shards) {
    if (shards.empty()) throw UnrecoverableFrame("no shards");
    const int k = shards[0].k;
    const size_t payload_len = shards[0].payload_len;
    const size_t shard_len = shards[0].bytes.size();

    std::vector<const Shard*> by_index(k + 1, nullptr);
    int have = 0;
    for (const auto& s : shards) {
        if (s.k != k || s.frame_id != shards[0].frame_id) throw UnrecoverableFrame("mixed frames");
        if (s.index < 0 || s.index > k) throw UnrecoverableFrame("bad shard index");
        if (!by_index[s.index]) {
            by_index[s.index] = &s;
            ++have;
        }
    }
    if (have < k) throw UnrecoverableFrame("need at least k distinct shards");

    int missing = -1;
    for (int i = 0; i < k; ++i)
        if (!by_index[i]) missing = i;

    std::vector<uint8_t> recovered(shard_len, 0);
    if (missing >= 0) {
        // the absent data shard is the XOR of everything else
        if (!by_index[k]) throw UnrecoverableFrame("two shards missing");
        for (int i = 0; i <= k; ++i) {
            if (i == missing) continue;
            for (size_t b = 0; b < shard_len; ++b) recovered[b] ^= by_index[i]->bytes[b];
        }
    }

    std::vector<uint8_t> payload;
    payload.reserve(payload_len);
    for (int i = 0; i < k; ++i) {
        const std::vector<uint8_t>& bytes = (i == missing) ? recovered : by_index[i]->bytes;
        for (size_t b = 0; b < shard_len && payload.size() < payload_len; ++b)
            payload.push_back(bytes[b]);
    }
    return payload;
}

// --- events ----------------------------------------------------------------------

enum class EventAction { Deliver, Timer, Churn };

struct SimEvent {
    double time = 0.0;
    uint64_t sequence = 0;
    EventAction action = EventAction::Timer;
    std::function<void()> fn;
};

struct EventOrder {
    bool operator()(const SimEvent& a, const SimEvent& b) const {
        if (a.time != b.time) return a.time > b.time;
        return a.sequence > b.sequence;  // min-heap on (time, sequence)
    }
};

// --- simulator --------------------------------------------------------------------

struct BroadcastMetrics {
    size_t reached = 0;
    size_t messages = 0;
};

struct SendHandle {
    uint64_t frame_id = 0;
    size_t shards_sent = 0;
    size_t shards_lost = 0;
};

class SimNet {
public:
    explicit SimNet(SimConfig config) : cfg_(std::move(config)) {
        cfg_.validate();
        link_ = LinkModel(cfg_.side, cfg_.base_velocity, cfg_.velocity_grid, cfg_.jitter);
        rng_topology_ = Rng(cfg_.seed).split(0x746f706full);
        rng_link_ = Rng(cfg_.seed).split(0x6c696e6bull);
        rng_loss_ = Rng(cfg_.seed).split(0x6c6f7373ull);
        rng_churn_ = Rng(cfg_.seed).split(0x636872ull);
        rng_swarm_ = Rng(cfg_.seed).split(0x7377726dull);
        rng_tables_ = Rng(cfg_.seed).split(0x7461626cull);

        dht::TableParams params;
        params.m_bits = cfg_.m_bits;
        params.k = cfg_.k;
        params.h = cfg_.height();
        params.M = cfg_.M;
        overlay_ = std::make_unique<dht::Overlay>(
            params, [this](const GeoPoint& a, const GeoPoint& b) { return link_.expected_latency(a, b); });

        // uniform positions; collisions on the key grid are re-drawn
        std::vector<GeoPoint> positions;
        std::set<uint64_t> used;
        while (static_cast<int>(positions.size()) < cfg_.nodes) {
            const GeoPoint p{rng_topology_.uniform(0, cfg_.side), rng_topology_.uniform(0, cfg_.side)};
            if (!used.insert(geokey::point_to_key(p, cfg_.side, cfg_.m_bits).value).second) continue;
            positions.push_back(p);
        }
        tree_ = cluster::build_hierarchy(positions, cfg_.k, cfg_.height(), hash_u64(cfg_.seed));

        for (size_t i = 0; i < positions.size(); ++i) {
            dht::NodeId id;
            id.key = geokey::point_to_key(positions[i], cfg_.side, cfg_.m_bits);
            id.addr = next_addr_++;
            id.position = positions[i];
            id.cluster_path = cluster::cluster_path(tree_, positions[i]);
            overlay_->join(id, rng_tables_);
        }
        overlay_->rebuild_all(rng_tables_);
        for (uint64_t key : overlay_->live_keys()) {
            Rng srng = rng_swarm_.split(hash_u64(key));
            swarm_states_.emplace(key, swarm::init_swarm_state(*overlay_, srng));
        }
    }

    const SimConfig& config() const { return cfg_; }
    dht::Overlay& overlay() { return *overlay_; }
    const cluster::ClusterTree& tree() const { return tree_; }
    const LinkModel& link() const { return link_; }
    route::PheromoneTable& pheromone() { return pheromone_; }
    swarm::OverheadCounters& counters() { return counters_; }
    std::map<uint64_t, swarm::SwarmState>& swarm_states() { return swarm_states_; }
    double now() const { return now_; }
    long epoch() const { return epoch_; }

    // --- event loop ---

    void schedule(double delay, EventAction action, std::function<void()> fn) {
        if (queue_.size() >= cfg_.event_cap) throw Error("event queue overflow");
        queue_.push(SimEvent{now_ + delay, sequence_++, action, std::move(fn)});
    }

    // process events in (time, sequence) order up to `until`
    void run_until(double until) {
        while (!queue_.empty() && queue_.top().time <= until) {
            SimEvent ev = queue_.top();
            queue_.pop();
            now_ = ev.time;  // events never run before their scheduled time
            ev.fn();
        }
        now_ = std::max(now_, until);
    }

    void run_all() {
        while (!queue_.empty()) {
            SimEvent ev = queue_.top();
            queue_.pop();
            now_ = ev.time;
            ev.fn();
        }
    }

    // --- routing ---

    route::RouteEnv route_env(bool learn = true) {
        return route::RouteEnv{*overlay_,
                               tree_,
                               pheromone_,
                               [this](const GeoPoint& a, const GeoPoint& b) {
                                   return link_.sample_latency(a, b, rng_link_);
                               },
                               cfg_.side,
                               cfg_.base_velocity,
                               epoch_,
                               100,
                               cfg_.route_length_weight,
                               learn};
    }

    // route and reinforce the pheromone trail on success
    route::RouteResult route_and_learn(uint64_t src, const RingKey& target,
                                       std::vector<route::TraceRow>* trace = nullptr) {
        auto env = route_env(true);
        auto res = route::route(env, src, target, -1, trace);
        counters_.account(swarm::OverheadEvent::routing(
            static_cast<long>(res.path.hops.empty() ? 0 : res.path.hops.size() - 1)));
        if (res.status == route::RouteStatus::Delivered && res.path.total_latency > 0.0)
            pheromone_.reinforce(res.path.hops, res.path.total_latency);
        return res;
    }

    // --- FEC transport ---

    // UDP-like contract: shards are lost independently, survivors arrive after
    // the link latency, the frame is delivered iff decodable, nothing is acked.
    SendHandle send(uint64_t src, uint64_t dst, const std::vector<uint8_t>& payload, int k_shards) {
        const auto& s = overlay_->state(src);
        const auto& d = overlay_->state(dst);
        if (!s.alive || !d.alive) throw UnknownNode("endpoint not live");
        SendHandle handle;
        handle.frame_id = next_frame_id_++;
        const FecFrame frame = fec_encode(payload, k_shards, handle.frame_id);
        const double latency = link_.sample_latency(s.id.position, d.id.position, rng_link_);

        auto arrived = std::make_shared<std::vector<Shard>>();
        for (const auto& shard : frame.shards) {
            ++handle.shards_sent;
            if (rng_loss_.next_double() < cfg_.loss) {
                ++handle.shards_lost;
                continue;  // silent loss, per the datagram contract
            }
            Shard copy = shard;
            const uint64_t id = handle.frame_id;
            schedule(latency, EventAction::Deliver, [this, dst, copy, arrived, id] {
                arrived->push_back(copy);
                if (arrived->size() == static_cast<size_t>(copy.k)) {
                    try {
                        const auto decoded = fec_decode(*arrived);
                        if (decoded.size() == copy.payload_len) {
                            delivered_frames_.insert(id);
                            delivered_payloads_[dst] += 1;
                        }
                    } catch (const UnrecoverableFrame&) {
                    }
                }
            });
        }
        return handle;
    }

    bool frame_delivered(uint64_t frame_id) const { return delivered_frames_.count(frame_id) > 0; }

    size_t delivered_count(uint64_t node) const {
        const auto it = delivered_payloads_.find(node);
        return it == delivered_payloads_.end() ? 0 : it->second;
    }

    // --- broadcast ---

    // Hierarchical flood: the source covers every sibling cluster at every
    // level with one representative; representatives recurse strictly inside
    // their own subtree. A successor sweep backs the tree so ell=0 coverage is
    // exact even when cluster contacts are missing. Duplicate frame ids drop.
    BroadcastMetrics broadcast(uint64_t src, const std::vector<uint8_t>& payload) {
        BroadcastMetrics metrics;
        const uint64_t frame_id = next_frame_id_++;
        std::set<uint64_t> seen;

        struct Pending {
            uint64_t to;
            uint64_t from;
            std::string scope;
        };

        // breadth-first over simulated deliveries; latency ordering does not
        // change reach/message counts, so process FIFO for determinism
        std::vector<Pending> inbox{{src, src, std::string()}};
        (void)payload;
        while (!inbox.empty()) {
            const Pending msg = inbox.front();
            inbox.erase(inbox.begin());
            if (msg.to != src && rng_loss_.next_double() < cfg_.loss) continue;  // lost in flight
            if (!overlay_->is_live(msg.to)) continue;
            if (!seen.insert(msg.to).second) continue;  // duplicate frame id dropped
            ++metrics.reached;
            const dht::NodeState& node = overlay_->state(msg.to);
            const std::string& path = node.id.cluster_path;

            std::vector<Pending> outgoing;
            auto push_to = [&](uint64_t key, const std::string& scope) {
                if (key == msg.to || key == msg.from) return;
                for (const auto& o : outgoing)
                    if (o.to == key) return;
                outgoing.push_back({key, msg.to, scope});
            };

            // one representative per sibling cluster below the received scope
            auto each_entry = [&](auto&& fn) {
                for (const auto& b : node.table.levels)
                    for (const auto& e : b) fn(e);
                for (const auto& e : node.table.neighbors) fn(e);
                for (const auto& e : node.table.successors) fn(e);
            };
            for (size_t lvl = msg.scope.size() + 1; lvl <= path.size(); ++lvl) {
                for (int d = 0; d < cfg_.k; ++d) {
                    const char digit = cluster::digit_char(d);
                    if (digit == path[lvl - 1]) continue;
                    const std::string sibling = path.substr(0, lvl - 1) + digit;
                    uint64_t found = 0;
                    bool has = false;
                    each_entry([&](const dht::FingerEntry& e) {
                        if (has || !overlay_->is_live(e.peer.key.value)) return;
                        if (e.peer.cluster_path.compare(0, sibling.size(), sibling) == 0) {
                            found = e.peer.key.value;
                            has = true;
                        }
                    });
                    if (has) push_to(found, sibling);
                }
            }
            // successor sweep with the same scope
            const dht::NodeState* succ = overlay_->successor_live(node);
            if (succ && succ->id.key.value != msg.to) push_to(succ->id.key.value, msg.scope);

            for (auto& o : outgoing) {
                ++metrics.messages;
                inbox.push_back(std::move(o));
            }
        }
        (void)frame_id;
        return metrics;
    }

    // --- churn ---

    // One epoch of Poisson churn: joins at fresh uniform positions, graceful
    // leaves, silent fails. Stabilization keeps running on its own timer.
    void churn_step() {
        const int joins = rng_churn_.poisson(cfg_.churn.join_rate);
        for (int i = 0; i < joins; ++i) join_random();
        const int leaves = rng_churn_.poisson(cfg_.churn.leave_rate);
        for (int i = 0; i < leaves; ++i) drop_random(false);
        const int fails = rng_churn_.poisson(cfg_.churn.fail_rate);
        for (int i = 0; i < fails; ++i) drop_random(true);
    }

    void join_random() {
        for (int attempt = 0; attempt < 64; ++attempt) {
            const GeoPoint p{rng_churn_.uniform(0, cfg_.side), rng_churn_.uniform(0, cfg_.side)};
            const RingKey key = geokey::point_to_key(p, cfg_.side, cfg_.m_bits);
            if (overlay_->contains(key.value)) continue;
            dht::NodeId id;
            id.key = key;
            id.addr = next_addr_++;
            id.position = p;
            id.cluster_path = cluster::cluster_path(tree_, p);
            overlay_->join(id, rng_tables_);
            Rng srng = rng_swarm_.split(hash_u64(key.value));
            swarm_states_.emplace(key.value, swarm::init_swarm_state(*overlay_, srng));
            return;
        }
    }

    void drop_random(bool silent) {
        const auto live = overlay_->live_keys();
        if (live.size() <= 1) return;
        const uint64_t key = live[rng_churn_.next_below(live.size())];
        if (silent)
            overlay_->fail(key);
        else
            overlay_->leave(key);
    }

    // fail an exact fraction of the live population
    std::vector<uint64_t> fail_fraction(double fraction) {
        auto live = overlay_->live_keys();
        const size_t count = static_cast<size_t>(std::lround(fraction * live.size()));
        std::vector<uint64_t> failed;
        for (size_t i = 0; i < count && live.size() > 1; ++i) {
            const size_t j = rng_churn_.next_below(live.size());
            overlay_->fail(live[j]);
            failed.push_back(live[j]);
            live.erase(live.begin() + j);
        }
        return failed;
    }

    void stabilize_round() {
        for (uint64_t key : overlay_->live_keys()) overlay_->stabilize(key);
    }

    // --- swarm epoch ---

    swarm::SwarmContext swarm_context() {
        return swarm::SwarmContext{*overlay_, tree_,    pheromone_, swarm_states_, counters_,
                                   cfg_.side, cfg_.base_velocity, epoch_, {}, {}};
    }

    // one optimization epoch: nodes whose interval divides the epoch run a
    // full exploration/validation/diffusion cycle
    int swarm_epoch() {
        auto ctx = swarm_context();
        ctx.epoch = epoch_;
        int accepted = 0;
        for (uint64_t key : overlay_->live_keys()) {
            auto it = swarm_states_.find(key);
            if (it == swarm_states_.end()) continue;
            auto& st = it->second;
            if (st.saturated(ctx.objective.interval_cap)) continue;
            if (epoch_ % st.interval != 0) continue;
            Rng rng = rng_swarm_.split(hash_combine(key, static_cast<uint64_t>(epoch_)));
            if (swarm::phase_step(ctx, key, rng)) ++accepted;
        }
        return accepted;
    }

    void advance_epoch() {
        ++epoch_;
        pheromone_.evaporate();
        counters_.roll_epoch();
    }

    bool all_saturated(long cap = 64) const {
        for (const auto& [key, st] : swarm_states_) {
            if (!overlay_->is_live(key)) continue;
            if (!st.saturated(cap)) return false;
        }
        return true;
    }

private:
    SimConfig cfg_;
    LinkModel link_;
    Rng rng_topology_{1}, rng_link_{1}, rng_loss_{1}, rng_churn_{1}, rng_swarm_{1}, rng_tables_{1};
    std::unique_ptr<dht::Overlay> overlay_;
    cluster::ClusterTree tree_;
    route::PheromoneTable pheromone_;
    swarm::OverheadCounters counters_;
    std::map<uint64_t, swarm::SwarmState> swarm_states_;
    std::priority_queue<SimEvent, std::vector<SimEvent>, EventOrder> queue_;
    std::set<uint64_t> delivered_frames_;
    std::map<uint64_t, size_t> delivered_payloads_;
    double now_ = 0.0;
    uint64_t sequence_ = 0;
    long epoch_ = 0;
    uint32_t next_addr_ = 0;
    uint64_t next_frame_id_ = 1;
};

// --- baselines -----------------------------------------------------------------

struct BaselinePath {
    bool delivered = false;
    int hops = 0;
    double latency = 0.0;
};

// Flat Chord: same physical nodes, location-agnostic random keys, log2(N)
// exponential fingers, greedy clockwise routing.
class FlatChord {
public:
    FlatChord(const std::vector<GeoPoint>& positions, const LinkModel& link, int m_bits, uint64_t seed)
        : link_(link), m_bits_(m_bits) {
        const uint64_t mask = geokey::ring_mask(m_bits);
        std::set<uint64_t> used;
        for (size_t i = 0; i < positions.size(); ++i) {
            uint64_t key = hash_combine(seed, i) & mask;
            while (!used.insert(key).second) key = hash_u64(key) & mask;
            Node node;
            node.key = key;
            node.position = positions[i];
            nodes_.push_back(std::move(node));
        }
        std::sort(nodes_.begin(), nodes_.end(),
                  [](const Node& a, const Node& b) { return a.key < b.key; });
        const int fingers = static_cast<int>(
            std::ceil(std::log2(static_cast<double>(std::max<size_t>(nodes_.size(), 2)))));
        for (size_t i = 0; i < nodes_.size(); ++i) {
            for (int j = 1; j <= fingers && j <= m_bits; ++j) {
                const uint64_t target = (nodes_[i].key + (1ull << (m_bits - j))) & mask;
                nodes_[i].fingers.push_back(owner_index(target));
            }
            nodes_[i].successor = (i + 1) % nodes_.size();
        }
    }

    size_t size() const { return nodes_.size(); }
    uint64_t key_of(size_t idx_sorted) const { return nodes_[idx_sorted].key; }

    size_t owner_index(uint64_t target) const {
        auto it = std::lower_bound(nodes_.begin(), nodes_.end(), target,
                                   [](const Node& n, uint64_t t) { return n.key < t; });
        if (it == nodes_.end()) it = nodes_.begin();
        return static_cast<size_t>(it - nodes_.begin());
    }

    // greedy clockwise: farthest known node that does not overshoot
    BaselinePath route(size_t src, uint64_t target_key, Rng& rng, int ttl = -1) const {
        BaselinePath path;
        if (ttl < 0) ttl = 4 * static_cast<int>(std::ceil(std::log2(static_cast<double>(
                              std::max<size_t>(nodes_.size(), 2)))));
        size_t cur = src;
        const RingKey target{target_key, m_bits_};
        const size_t owner = owner_index(target_key);
        for (int hop = 0; hop <= ttl; ++hop) {
            if (nodes_[cur].key == target_key || cur == owner) {
                path.delivered = true;
                return path;
            }
            const RingKey cur_key{nodes_[cur].key, m_bits_};
            const size_t succ = nodes_[cur].successor;
            if (geokey::on_arc(cur_key, RingKey{nodes_[succ].key, m_bits_}, target)) {
                // successor owns the target
                path.latency += link_.sample_latency(nodes_[cur].position, nodes_[succ].position, rng);
                ++path.hops;
                path.delivered = true;
                return path;
            }
            size_t best = succ;
            uint64_t best_prog = geokey::clockwise_distance(cur_key, RingKey{nodes_[succ].key, m_bits_});
            for (size_t f : nodes_[cur].fingers) {
                const RingKey fk{nodes_[f].key, m_bits_};
                if (!geokey::on_arc(cur_key, target, fk)) continue;
                const uint64_t prog = geokey::clockwise_distance(cur_key, fk);
                if (prog > best_prog) {
                    best_prog = prog;
                    best = f;
                }
            }
            path.latency += link_.sample_latency(nodes_[cur].position, nodes_[best].position, rng);
            ++path.hops;
            cur = best;
        }
        return path;  // ttl exceeded
    }

private:
    struct Node {
        uint64_t key = 0;
        GeoPoint position;
        std::vector<size_t> fingers;
        size_t successor = 0;
    };

    std::vector<Node> nodes_;
    LinkModel link_;
    int m_bits_;
};

// XOR-metric baseline: 160-bit hashed ids, per-bit buckets, iterative greedy
// descent toward the closest known contact.
class XorOverlay {
public:
    static constexpr int kIdBytes = 20;
    using Id = std::array<uint8_t, kIdBytes>;

    XorOverlay(const std::vector<GeoPoint>& positions, const LinkModel& link, uint64_t seed,
               int bucket_size = 3)
        : link_(link) {
        for (size_t i = 0; i < positions.size(); ++i)
            nodes_.push_back({make_id(seed, i), positions[i], {}});
        // per-bit buckets, capped, nearest-by-xor kept
        for (size_t i = 0; i < nodes_.size(); ++i) {
            std::map<int, std::vector<size_t>> buckets;
            for (size_t j = 0; j < nodes_.size(); ++j) {
                if (i == j) continue;
                buckets[common_prefix_bits(nodes_[i].id, nodes_[j].id)].push_back(j);
            }
            for (auto& [bits, members] : buckets) {
                std::sort(members.begin(), members.end(), [&](size_t a, size_t b) {
                    return xor_less(nodes_[i].id, nodes_[a].id, nodes_[b].id);
                });
                if (static_cast<int>(members.size()) > bucket_size) members.resize(bucket_size);
                for (size_t m : members) nodes_[i].contacts.push_back(m);
            }
        }
    }

    size_t size() const { return nodes_.size(); }
    const Id& id_of(size_t idx) const { return nodes_[idx].id; }

    BaselinePath route(size_t src, const Id& target, Rng& rng, int ttl = -1) const {
        BaselinePath path;
        if (ttl < 0) ttl = 4 * static_cast<int>(std::ceil(std::log2(static_cast<double>(
                              std::max<size_t>(nodes_.size(), 2)))));
        size_t cur = src;
        for (int hop = 0; hop <= ttl; ++hop) {
            if (nodes_[cur].id == target) {
                path.delivered = true;
                return path;
            }
            size_t best = cur;
            for (size_t c : nodes_[cur].contacts)
                if (xor_less(target, nodes_[c].id, nodes_[best].id)) best = c;
            if (best == cur) {
                // local minimum: closest node this overlay can reach
                path.delivered = true;
                return path;
            }
            path.latency += link_.sample_latency(nodes_[cur].position, nodes_[best].position, rng);
            ++path.hops;
            cur = best;
        }
        return path;
    }

private:
    struct Node {
        Id id;
        GeoPoint position;
        std::vector<size_t> contacts;
    };

    static Id make_id(uint64_t seed, size_t index) {
        Id id{};
        uint64_t s = hash_combine(seed, index);
        for (int b = 0; b < kIdBytes; ++b) id[b] = static_cast<uint8_t>(splitmix64(s) & 0xff);
        return id;
    }

    static int common_prefix_bits(const Id& a, const Id& b) {
        for (int byte = 0; byte < kIdBytes; ++byte) {
            const uint8_t x = a[byte] ^ b[byte];
            if (x == 0) continue;
            int lead = 0;
            for (int bit = 7; bit >= 0; --bit) {
                if (x & (1u << bit)) break;
                ++lead;
            }
            return byte * 8 + lead;
        }
        return kIdBytes * 8;
    }

    // xor(a, x) < xor(a, y), big-endian lexicographic
    static bool xor_less(const Id& a, const Id& x, const Id& y) {
        for (int byte = 0; byte < kIdBytes; ++byte) {
            const uint8_t dx = a[byte] ^ x[byte];
            const uint8_t dy = a[byte] ^ y[byte];
            if (dx != dy) return dx < dy;
        }
        return false;
    }

    std::vector<Node> nodes_;
    LinkModel link_;
};

inline BaselinePath baseline_flat_chord_route(const FlatChord& net, size_t src, uint64_t target_key,
                                              Rng& rng) {
    return net.route(src, target_key, rng);
}

inline BaselinePath baseline_xor_route(const XorOverlay& net, size_t src, const XorOverlay::Id& target,
                                       Rng& rng) {
    return net.route(src, target, rng);
}

}  // namespace georing::sim
