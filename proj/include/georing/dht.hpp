// Node state and hierarchical ring routing tables.
//
// Every node keeps h+1 finger buckets (level i holds at most ceil(log2 k^i)
// entries at exponentially spaced clockwise offsets), a latency-nearest
// neighborhood of size M, and an s-entry successor list. Per-level adjacency
// matrices track EWMA inter-cluster latencies and feed the routing heuristic.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "georing/cluster.hpp"
#include "georing/errors.hpp"
#include "georing/geokey.hpp"
#include "georing/rng.hpp"

namespace georing::dht {

using geokey::RingKey;
using geokey::GeoPoint;

constexpr double kEwmaAlpha = 0.2;

struct NodeId {
    RingKey key;
    uint32_t addr = 0;  // opaque simulator handle
    GeoPoint position;
    std::string cluster_path;
};

struct HeuristicIndicators {
    double latency_ewma = 0.0;
    bool has_latency = false;
    double availability = 1.0;
    double load = 0.0;
    uint64_t usage_count = 0;
};

struct FingerEntry {
    NodeId peer;
    HeuristicIndicators indicators;
};

struct RoutingTable {
    std::vector<std::vector<FingerEntry>> levels;  // h+1 buckets
    std::vector<FingerEntry> neighbors;            // <= M, latency-nearest
    std::vector<FingerEntry> successors;           // sorted by clockwise distance

    size_t finger_count() const {
        size_t n = 0;
        for (const auto& b : levels) n += b.size();
        return n;
    }
    size_t total_entries() const { return finger_count() + neighbors.size() + successors.size(); }
};

// number of finger slots at level i: ceil(log2 k^i)
inline int level_fingers(int level, int k) {
    return static_cast<int>(std::ceil(level * std::log2(static_cast<double>(k))));
}

// table-wide finger bound: sum of ceil(i * log2 k) for i = 0..h
inline int finger_capacity(int k, int h) {
    int cap = 0;
    for (int i = 0; i <= h; ++i) cap += level_fingers(i, k);
    return cap;
}

// Buckets consume the clockwise offset ladder 2^(m-1), 2^(m-2), ...
// cumulatively (as Kademlia buckets partition distance scales): level i holds
// the next ceil(log2 k^i) rungs after the ones taken by levels below it, so
// the table spans sum(i log2 k) distinct scales. Returns (level, rung) pairs;
// the offset for rung j is 2^(m-j).
inline std::vector<std::pair<int, int>> finger_rungs(int k, int h, int m_bits) {
    std::vector<std::pair<int, int>> rungs;
    int next = 1;
    for (int level = 0; level <= h; ++level)
        for (int j = 0; j < level_fingers(level, k); ++j) {
            if (next >= m_bits) return rungs;
            rungs.push_back({level, next++});
        }
    return rungs;
}

inline void update_indicator(HeuristicIndicators& ind, double rtt_sample, bool success,
                             double alpha = kEwmaAlpha) {
    if (success) {
        ind.latency_ewma = ind.has_latency ? alpha * rtt_sample + (1.0 - alpha) * ind.latency_ewma
                                           : rtt_sample;
        ind.has_latency = true;
        ind.availability = alpha * 1.0 + (1.0 - alpha) * ind.availability;
    } else {
        ind.availability = (1.0 - alpha) * ind.availability;
    }
    ++ind.usage_count;
}

// EWMA latencies between level-i clusters; lazily populated, symmetric,
// zero diagonal.
class AdjacencyMatrix {
public:
    struct Entry {
        double latency = 0.0;
        long epoch = 0;
    };

    AdjacencyMatrix() = default;
    AdjacencyMatrix(int level, int k)
        : level_(level), side_(static_cast<int>(std::llround(std::pow(k, level)))) {}

    int level() const { return level_; }
    int side() const { return side_; }

    void update(int p, int q, double sample, long epoch, double alpha = kEwmaAlpha) {
        if (p == q) return;  // diagonal pinned to zero
        if (sample < 0.0) throw ConfigError("negative latency sample");
        const auto key = ordered(p, q);
        auto it = cells_.find(key);
        if (it == cells_.end())
            cells_[key] = {sample, epoch};
        else {
            it->second.latency = alpha * sample + (1.0 - alpha) * it->second.latency;
            it->second.epoch = epoch;
        }
    }

    // row-major lookup; diagonal is always a fresh zero
    std::optional<Entry> get(int p, int q) const {
        if (p == q) return Entry{0.0, std::numeric_limits<long>::max()};
        const auto it = cells_.find(ordered(p, q));
        if (it == cells_.end()) return std::nullopt;
        return it->second;
    }

    const std::map<std::pair<int, int>, Entry>& cells() const { return cells_; }

    // adopt any entry with a newer epoch (diffusion merge)
    void merge_newer(const AdjacencyMatrix& other) {
        for (const auto& [key, e] : other.cells_) {
            auto it = cells_.find(key);
            if (it == cells_.end() || it->second.epoch < e.epoch) cells_[key] = e;
        }
    }

private:
    static std::pair<int, int> ordered(int p, int q) { return {std::min(p, q), std::max(p, q)}; }

    int level_ = 0;
    int side_ = 1;
    std::map<std::pair<int, int>, Entry> cells_;
};

struct DirectoryEntry {
    NodeId id;
    double latency = 0.0;  // expected latency from the joining node
};

struct TableParams {
    int m_bits = 32;
    int k = 2;
    int h = 3;
    int M = 4;
    int s = 3;
    size_t neighbor_sample = 64;  // directory subsample for neighbor selection
};

// Build a table from a directory snapshot. Finger targets sit at clockwise
// offsets 2^(m-1), 2^(m-2), ... (level i uses the first ceil(log2 k^i) of
// them) and resolve to the first live peer clockwise of the target key.
inline RoutingTable build_routing_table(const NodeId& self, const std::vector<DirectoryEntry>& directory,
                                        const TableParams& params, Rng& rng) {
    RoutingTable table;
    table.levels.assign(params.h + 1, {});

    if (directory.empty()) {
        FingerEntry self_loop{self, {}};
        table.successors.push_back(self_loop);  // self-loop ring of one
        return table;
    }

    // key-sorted view for clockwise resolution
    std::vector<const DirectoryEntry*> by_key;
    by_key.reserve(directory.size());
    for (const auto& d : directory) by_key.push_back(&d);
    std::sort(by_key.begin(), by_key.end(),
              [](const DirectoryEntry* a, const DirectoryEntry* b) { return a->id.key.value < b->id.key.value; });

    auto owner_of = [&](uint64_t target) -> const DirectoryEntry* {
        auto it = std::lower_bound(by_key.begin(), by_key.end(), target,
                                   [](const DirectoryEntry* d, uint64_t t) { return d->id.key.value < t; });
        if (it == by_key.end()) it = by_key.begin();
        return *it;
    };

    const uint64_t mask = geokey::ring_mask(params.m_bits);
    for (const auto& [level, rung] : finger_rungs(params.k, params.h, params.m_bits)) {
        auto& bucket = table.levels[level];
        const uint64_t target = (self.key.value + (1ull << (params.m_bits - rung))) & mask;
        const DirectoryEntry* owner = owner_of(target);
        if (owner->id.key == self.key) continue;
        bool dup = false;
        for (const auto& f : bucket)
            if (f.peer.key == owner->id.key) dup = true;
        if (dup) continue;
        FingerEntry entry{owner->id, {}};
        update_indicator(entry.indicators, owner->latency, true);
        entry.indicators.usage_count = 0;
        bucket.push_back(entry);
    }

    // neighborhood: M lowest-latency peers from a directory sample
    {
        std::vector<const DirectoryEntry*> sample;
        if (directory.size() <= params.neighbor_sample) {
            for (const auto& d : directory) sample.push_back(&d);
        } else {
            std::vector<size_t> idx(directory.size());
            std::iota(idx.begin(), idx.end(), size_t{0});
            for (size_t i = 0; i < params.neighbor_sample; ++i) {
                const size_t j = i + rng.next_below(idx.size() - i);
                std::swap(idx[i], idx[j]);
                sample.push_back(&directory[idx[i]]);
            }
        }
        std::sort(sample.begin(), sample.end(), [](const DirectoryEntry* a, const DirectoryEntry* b) {
            if (a->latency != b->latency) return a->latency < b->latency;
            return a->id.key.value < b->id.key.value;
        });
        for (const auto* d : sample) {
            if (static_cast<int>(table.neighbors.size()) >= params.M) break;
            if (d->id.key == self.key) continue;
            FingerEntry entry{d->id, {}};
            update_indicator(entry.indicators, d->latency, true);
            entry.indicators.usage_count = 0;
            table.neighbors.push_back(entry);
        }
    }

    // successor list: s nearest clockwise
    {
        auto start = std::upper_bound(by_key.begin(), by_key.end(), self.key.value,
                                      [](uint64_t t, const DirectoryEntry* d) { return t < d->id.key.value; });
        for (int taken = 0; taken < params.s && taken < static_cast<int>(by_key.size()); ++taken) {
            if (start == by_key.end()) start = by_key.begin();
            const DirectoryEntry* d = *start++;
            if (d->id.key == self.key) break;  // wrapped all the way around
            FingerEntry entry{d->id, {}};
            update_indicator(entry.indicators, d->latency, true);
            entry.indicators.usage_count = 0;
            table.successors.push_back(entry);
        }
        if (table.successors.empty()) table.successors.push_back(FingerEntry{self, {}});
    }
    return table;
}

// Candidate entries for a hop toward `target`: every table entry on the
// clockwise arc (self, target], ordered by deepest shared cluster prefix,
// then ring distance, then key.
inline std::vector<const FingerEntry*> candidates(const RoutingTable& table, const RingKey& self_key,
                                                  const RingKey& target, const std::string& target_path) {
    std::vector<const FingerEntry*> out;
    if (target == self_key) return out;
    auto consider = [&](const FingerEntry& e) {
        if (e.peer.key == self_key) return;
        if (!geokey::on_arc(self_key, target, e.peer.key)) return;
        for (const auto* seen : out)
            if (seen->peer.key == e.peer.key) return;
        out.push_back(&e);
    };
    for (const auto& bucket : table.levels)
        for (const auto& e : bucket) consider(e);
    for (const auto& e : table.neighbors) consider(e);
    for (const auto& e : table.successors) consider(e);

    std::sort(out.begin(), out.end(), [&](const FingerEntry* a, const FingerEntry* b) {
        const int sa = cluster::shared_prefix(a->peer.cluster_path, target_path);
        const int sb = cluster::shared_prefix(b->peer.cluster_path, target_path);
        if (sa != sb) return sa > sb;
        const uint64_t da = geokey::ring_distance(a->peer.key, target);
        const uint64_t db = geokey::ring_distance(b->peer.key, target);
        if (da != db) return da < db;
        return a->peer.key.value < b->peer.key.value;
    });
    return out;
}

// One line per entry: level, peer key hex, latency_ewma, availability, load, usage_count.
inline void dump_table(const RoutingTable& table, std::ostream& os) {
    char buf[160];
    auto line = [&](const char* level, const FingerEntry& e) {
        std::snprintf(buf, sizeof(buf), "%s %s %.6g %.6g %.6g %llu\n", level, e.peer.key.hex().c_str(),
                      e.indicators.latency_ewma, e.indicators.availability, e.indicators.load,
                      static_cast<unsigned long long>(e.indicators.usage_count));
        os << buf;
    };
    for (size_t i = 0; i < table.levels.size(); ++i) {
        const std::string lvl = std::to_string(i);
        for (const auto& e : table.levels[i]) line(lvl.c_str(), e);
    }
    for (const auto& e : table.neighbors) line("N", e);
    for (const auto& e : table.successors) line("S", e);
}

// --- overlay (node registry + ring maintenance) ----------------------------

struct NodeState {
    NodeId id;
    RoutingTable table;
    uint64_t predecessor = 0;
    bool predecessor_valid = false;
    bool alive = true;
    int refresh_cursor = 0;                    // round-robin finger refresh
    std::vector<AdjacencyMatrix> adjacency;    // levels 0..h
    std::vector<std::pair<RingKey, double>> traffic_log;  // recorded send targets
};

// Registry of nodes on one key ring. Single-owner mutation: the simulation
// loop is the only writer.
class Overlay {
public:
    using LatencyFn = std::function<double(const GeoPoint&, const GeoPoint&)>;

    Overlay(TableParams params, LatencyFn expected_latency)
        : params_(params), latency_(std::move(expected_latency)) {}

    const TableParams& params() const { return params_; }
    TableParams& params() { return params_; }

    double expected_latency(const GeoPoint& a, const GeoPoint& b) const { return latency_(a, b); }

    bool contains(uint64_t key) const { return nodes_.count(key) > 0; }
    bool is_live(uint64_t key) const {
        const auto it = nodes_.find(key);
        return it != nodes_.end() && it->second.alive;
    }

    NodeState& state(uint64_t key) {
        const auto it = nodes_.find(key);
        if (it == nodes_.end()) throw UnknownNode();
        return it->second;
    }
    const NodeState& state(uint64_t key) const {
        const auto it = nodes_.find(key);
        if (it == nodes_.end()) throw UnknownNode();
        return it->second;
    }

    size_t live_count() const {
        size_t n = 0;
        for (const auto& [k, st] : nodes_)
            if (st.alive) ++n;
        return n;
    }

    std::vector<uint64_t> live_keys() const {
        std::vector<uint64_t> keys;
        for (const auto& [k, st] : nodes_)
            if (st.alive) keys.push_back(k);
        return keys;
    }

    // first live node clockwise of (or at) `target`
    const NodeState* owner_of(uint64_t target) const {
        if (nodes_.empty()) return nullptr;
        auto it = nodes_.lower_bound(target);
        for (size_t hops = 0; hops <= nodes_.size(); ++hops) {
            if (it == nodes_.end()) it = nodes_.begin();
            if (it->second.alive) return &it->second;
            ++it;
        }
        return nullptr;
    }

    // directory snapshot of live peers as seen from `from` (expected latencies)
    std::vector<DirectoryEntry> directory_for(const NodeId& from) const {
        std::vector<DirectoryEntry> dir;
        for (const auto& [k, st] : nodes_) {
            if (!st.alive || k == from.key.value) continue;
            dir.push_back({st.id, latency_(from.position, st.id.position)});
        }
        return dir;
    }

    void join(const NodeId& id, Rng& rng) {
        if (nodes_.count(id.key.value)) throw DuplicateKey(id.key.hex());
        NodeState st;
        st.id = id;
        st.adjacency.reserve(params_.h + 1);
        for (int lvl = 0; lvl <= params_.h; ++lvl) st.adjacency.emplace_back(lvl, params_.k);

        // route to our own key to locate the successor, then build the table
        const NodeState* succ = nullptr;
        if (!nodes_.empty()) succ = find_successor(id.key.value);
        st.table = build_routing_table(id, directory_for(id), params_, rng);
        const uint64_t self = id.key.value;
        nodes_.emplace(self, std::move(st));

        if (succ) {
            // notify successor and predecessor so the ring order is preserved
            NodeState& s = nodes_.at(succ->id.key.value);
            const uint64_t old_pred = s.predecessor_valid ? s.predecessor : succ->id.key.value;
            nodes_.at(self).predecessor = old_pred;
            nodes_.at(self).predecessor_valid = true;
            s.predecessor = self;
            s.predecessor_valid = true;
            NodeState& p = nodes_.at(old_pred);
            refresh_successors(p);
        } else {
            nodes_.at(self).predecessor = self;
            nodes_.at(self).predecessor_valid = true;
        }
    }

    void leave(uint64_t key) {
        auto it = nodes_.find(key);
        if (it == nodes_.end() || !it->second.alive) throw UnknownNode();
        // graceful: notify neighbors on the ring before going away
        NodeState& st = it->second;
        const NodeState* succ = successor_live(st);
        st.alive = false;
        if (succ && succ->id.key.value != key) {
            NodeState& s = nodes_.at(succ->id.key.value);
            if (st.predecessor_valid) {
                s.predecessor = st.predecessor;
                s.predecessor_valid = true;
                auto pit = nodes_.find(st.predecessor);
                if (pit != nodes_.end() && pit->second.alive) refresh_successors(pit->second);
            }
        }
    }

    void fail(uint64_t key) {
        auto it = nodes_.find(key);
        if (it == nodes_.end() || !it->second.alive) throw UnknownNode();
        it->second.alive = false;  // silent; repair is stabilize's job
    }

    // One maintenance round for one node: verify the successor, advance past
    // dead entries, pull the successor's list, refresh one finger.
    void stabilize(uint64_t key) {
        NodeState& st = nodes_.at(key);
        if (!st.alive) return;

        // advance to the first live successor-list entry
        const NodeState* succ = successor_live(st);
        if (!succ) {
            // entire list dead: fall back to the registry owner
            const NodeState* o = owner_of((key + 1) & geokey::ring_mask(params_.m_bits));
            succ = o ? o : &st;
        }

        // pull the successor's successor list (chord-style gossip)
        std::vector<FingerEntry> fresh;
        auto push_unique = [&](const NodeState& n) {
            if (n.id.key.value == key) return false;
            for (const auto& e : fresh)
                if (e.peer.key.value == n.id.key.value) return true;
            FingerEntry entry{n.id, {}};
            update_indicator(entry.indicators, latency_(st.id.position, n.id.position), true);
            entry.indicators.usage_count = 0;
            fresh.push_back(entry);
            return true;
        };
        if (succ->id.key.value != key) {
            push_unique(*succ);
            for (const auto& e : nodes_.at(succ->id.key.value).table.successors) {
                if (static_cast<int>(fresh.size()) >= params_.s) break;
                const auto nit = nodes_.find(e.peer.key.value);
                if (nit != nodes_.end() && nit->second.alive) push_unique(nit->second);
            }
            st.table.successors = std::move(fresh);
            // notify: we may be our successor's predecessor
            NodeState& s = nodes_.at(succ->id.key.value);
            if (!s.predecessor_valid || !is_live(s.predecessor) ||
                geokey::on_arc(RingKey{s.predecessor, params_.m_bits}, s.id.key, st.id.key)) {
                if (s.id.key.value != key) {
                    s.predecessor = key;
                    s.predecessor_valid = true;
                }
            }
        } else {
            st.table.successors = {FingerEntry{st.id, {}}};
            st.predecessor = key;
            st.predecessor_valid = true;
        }

        // drop dead neighbors
        auto& nb = st.table.neighbors;
        nb.erase(std::remove_if(nb.begin(), nb.end(),
                                [&](const FingerEntry& e) { return !is_live(e.peer.key.value); }),
                 nb.end());

        // refresh one finger slot per round, round-robin over the rung ladder
        const auto slots = finger_rungs(params_.k, params_.h, params_.m_bits);
        if (!slots.empty()) {
            const auto [lvl, rung] = slots[st.refresh_cursor % slots.size()];
            ++st.refresh_cursor;
            const uint64_t target =
                (key + (1ull << (params_.m_bits - rung))) & geokey::ring_mask(params_.m_bits);
            const NodeState* owner = find_successor(target);
            auto& bucket = st.table.levels[lvl];
            bucket.erase(std::remove_if(bucket.begin(), bucket.end(),
                                        [&](const FingerEntry& e) { return !is_live(e.peer.key.value); }),
                         bucket.end());
            if (owner && owner->id.key.value != key) {
                bool dup = false;
                for (const auto& e : bucket)
                    if (e.peer.key == owner->id.key) dup = true;
                if (!dup && static_cast<int>(bucket.size()) < level_fingers(lvl, params_.k)) {
                    FingerEntry entry{owner->id, {}};
                    update_indicator(entry.indicators, latency_(st.id.position, owner->id.position), true);
                    entry.indicators.usage_count = 0;
                    bucket.push_back(entry);
                }
            }
        }
    }

    // Rebuild every live table from the full registry; models a static,
    // fully stabilized network.
    void rebuild_all(Rng& rng) {
        const int live = static_cast<int>(live_count());
        params_.s = std::max(3, static_cast<int>(std::ceil(std::log2(std::max(2, live)))));
        std::vector<uint64_t> keys = live_keys();
        for (uint64_t k : keys) {
            NodeState& st = nodes_.at(k);
            Rng table_rng = rng.split(hash_u64(k));
            st.table = build_routing_table(st.id, directory_for(st.id), params_, table_rng);
        }
        // exact predecessors from the ring order
        for (size_t i = 0; i < keys.size(); ++i) {
            NodeState& st = nodes_.at(keys[i]);
            st.predecessor = keys[(i + keys.size() - 1) % keys.size()];
            st.predecessor_valid = true;
        }
    }

    // greedy clockwise walk over existing tables to locate a key's owner
    const NodeState* find_successor(uint64_t target) const {
        if (nodes_.empty()) return nullptr;
        const NodeState* cur = nullptr;
        for (const auto& [k, st] : nodes_)
            if (st.alive) {
                cur = &st;
                break;
            }
        if (!cur) return nullptr;
        const RingKey t{target, params_.m_bits};
        for (size_t guard = 0; guard <= nodes_.size() + 2; ++guard) {
            if (cur->id.key.value == target) return cur;
            // done when the target falls between us and our first live successor
            const NodeState* succ = successor_live(*cur);
            if (!succ || succ->id.key.value == cur->id.key.value) return cur;
            if (geokey::on_arc(cur->id.key, succ->id.key, t)) return succ;
            // hop to the farthest table entry that does not overshoot
            const NodeState* best = succ;
            uint64_t best_prog = geokey::clockwise_distance(cur->id.key, succ->id.key);
            auto consider = [&](const FingerEntry& e) {
                const auto it = nodes_.find(e.peer.key.value);
                if (it == nodes_.end() || !it->second.alive) return;
                if (!geokey::on_arc(cur->id.key, t, e.peer.key)) return;
                const uint64_t prog = geokey::clockwise_distance(cur->id.key, e.peer.key);
                if (prog > best_prog) {
                    best_prog = prog;
                    best = &it->second;
                }
            };
            for (const auto& b : cur->table.levels)
                for (const auto& e : b) consider(e);
            for (const auto& e : cur->table.successors) consider(e);
            for (const auto& e : cur->table.neighbors) consider(e);
            if (best == cur) return cur;
            cur = best;
        }
        return owner_of(target);  // walk failed to settle; registry fallback
    }

    const NodeState* successor_live(const NodeState& st) const {
        for (const auto& e : st.table.successors) {
            const auto it = nodes_.find(e.peer.key.value);
            if (it != nodes_.end() && it->second.alive) return &it->second;
        }
        return nullptr;
    }

    // rebuild one node's successor list from the live registry (join/leave notify)
    void refresh_successors(NodeState& st) {
        if (!st.alive) return;
        std::vector<FingerEntry> fresh;
        auto it = nodes_.upper_bound(st.id.key.value);
        for (size_t scanned = 0; scanned <= nodes_.size() && static_cast<int>(fresh.size()) < params_.s;
             ++scanned) {
            if (it == nodes_.end()) it = nodes_.begin();
            if (it->first == st.id.key.value) break;  // wrapped around
            if (it->second.alive) {
                FingerEntry e{it->second.id, {}};
                update_indicator(e.indicators, latency_(st.id.position, it->second.id.position), true);
                e.indicators.usage_count = 0;
                fresh.push_back(e);
            }
            ++it;
        }
        if (fresh.empty()) fresh.push_back(FingerEntry{st.id, {}});
        st.table.successors = std::move(fresh);
    }

    const std::map<uint64_t, NodeState>& nodes() const { return nodes_; }
    std::map<uint64_t, NodeState>& nodes() { return nodes_; }

private:
    TableParams params_;
    LatencyFn latency_;
    std::map<uint64_t, NodeState> nodes_;
};

}  // namespace georing::dht
