#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <set>

#include "georing/sim.hpp"

using namespace georing;
namespace gs = georing::sim;

namespace {

gs::SimConfig small_config(int nodes, uint64_t seed) {
    gs::SimConfig cfg;
    cfg.nodes = nodes;
    cfg.seed = seed;
    cfg.m_bits = 16;
    return cfg;
}

std::vector<uint8_t> random_payload(Rng& rng, size_t max_len) {
    std::vector<uint8_t> p(1 + rng.next_below(max_len));
    for (auto& b : p) b = static_cast<uint8_t>(rng.next_below(256));
    return p;
}

}  // namespace

TEST_CASE("link_latency") {
    Rng rng(1);

    SUBCASE("zero distance, zero jitter is zero") {
        gs::LinkModel model(1000, 1.0, {1.0}, 0.0);
        CHECK(gs::link_latency({5, 5}, {5, 5}, model, rng) == 0.0);
    }

    SUBCASE("unit velocity: latency equals distance") {
        gs::LinkModel model(1000, 1.0, {1.0}, 0.0);
        CHECK(gs::link_latency({0, 0}, {100, 0}, model, rng) == doctest::Approx(100.0));
    }

    SUBCASE("a 2x multiplier over the segment halves latency") {
        // left half 2x, right half 1x; the segment stays in the left half
        gs::LinkModel fast(1000, 1.0, {2.0, 1.0, 2.0, 1.0}, 0.0);
        gs::LinkModel flat(1000, 1.0, {1.0}, 0.0);
        const Vec2 a{10, 10}, b{210, 10};
        CHECK(fast.expected_latency(a, b) == doctest::Approx(flat.expected_latency(a, b) / 2.0));
    }

    SUBCASE("jitter draws stay within [0, j)") {
        gs::LinkModel model(1000, 1.0, {1.0}, 5.0);
        for (int i = 0; i < 200; ++i) {
            const double lat = gs::link_latency({0, 0}, {100, 0}, model, rng);
            CHECK(lat >= 100.0);
            CHECK(lat < 105.0);
        }
    }
}

TEST_CASE("fec encode and decode") {
    Rng rng(7);

    SUBCASE("k=1 duplicates the payload; either shard reconstructs") {
        const std::vector<uint8_t> payload = {1, 2, 3};
        const auto frame = gs::fec_encode(payload, 1);
        REQUIRE(frame.shards.size() == 2);
        CHECK(frame.shards[0].bytes == frame.shards[1].bytes);
        CHECK(gs::fec_decode({frame.shards[0]}) == payload);
        CHECK(gs::fec_decode({frame.shards[1]}) == payload);
    }

    SUBCASE("k=4 drop parity: direct reassembly") {
        const std::vector<uint8_t> payload = {9, 8, 7, 6, 5, 4, 3, 2, 1};
        const auto frame = gs::fec_encode(payload, 4);
        std::vector<gs::Shard> data(frame.shards.begin(), frame.shards.end() - 1);
        CHECK(gs::fec_decode(data) == payload);
    }

    SUBCASE("k=4 drop a data shard: XOR of survivors restores it") {
        Rng prng(3);
        const auto payload = random_payload(prng, 64);
        const auto frame = gs::fec_encode(payload, 4);
        std::vector<gs::Shard> got;
        for (const auto& s : frame.shards)
            if (s.index != 2) got.push_back(s);
        // oracle: XOR of shards {0,1,3,parity} equals shard 2
        std::vector<uint8_t> xored(frame.shards[0].bytes.size(), 0);
        for (const auto& s : got)
            for (size_t b = 0; b < xored.size(); ++b) xored[b] ^= s.bytes[b];
        CHECK(xored == frame.shards[2].bytes);
        CHECK(gs::fec_decode(got) == payload);
    }

    SUBCASE("two missing shards are unrecoverable") {
        const std::vector<uint8_t> payload = {1, 2, 3, 4, 5, 6, 7, 8};
        const auto frame = gs::fec_encode(payload, 4);
        std::vector<gs::Shard> got = {frame.shards[0], frame.shards[1], frame.shards[4]};
        CHECK_THROWS_AS(gs::fec_decode(got), UnrecoverableFrame);
    }

    SUBCASE("any single dropped shard reconstructs, random payloads") {
        for (int trial = 0; trial < 500; ++trial) {
            const int k = 1 + static_cast<int>(rng.next_below(16));
            const auto payload = random_payload(rng, 200);
            const auto frame = gs::fec_encode(payload, k, trial);
            const size_t drop = rng.next_below(frame.shards.size());
            std::vector<gs::Shard> got;
            for (size_t i = 0; i < frame.shards.size(); ++i)
                if (i != drop) got.push_back(frame.shards[i]);
            REQUIRE(gs::fec_decode(got) == payload);
        }
    }
}

TEST_CASE("event loop") {
    gs::SimNet net(small_config(4, 3));

    SUBCASE("no events returns immediately") {
        net.run_until(10.0);
        CHECK(net.now() == 10.0);
    }

    SUBCASE("events run in (time, sequence) order, never early") {
        std::vector<int> order;
        double seen_time = -1.0;
        gs::SimNet sim(small_config(4, 4));
        sim.schedule(5.0, gs::EventAction::Timer, [&] { order.push_back(2); });
        sim.schedule(1.0, gs::EventAction::Timer, [&] {
            order.push_back(1);
            seen_time = sim.now();
        });
        sim.schedule(5.0, gs::EventAction::Timer, [&] { order.push_back(3); });  // ties: sequence order
        sim.run_until(100.0);
        CHECK(order == std::vector<int>{1, 2, 3});
        CHECK(seen_time == doctest::Approx(1.0));
    }

    SUBCASE("one message between two nodes arrives at send time + latency") {
        gs::SimConfig cfg = small_config(2, 5);
        gs::SimNet sim(cfg);
        const auto keys = sim.overlay().live_keys();
        const auto& a = sim.overlay().state(keys[0]);
        const auto& b = sim.overlay().state(keys[1]);
        const double expected = sim.link().expected_latency(a.id.position, b.id.position);
        const auto handle = sim.send(keys[0], keys[1], {1, 2, 3}, 2);
        CHECK_FALSE(sim.frame_delivered(handle.frame_id));
        sim.run_until(expected - 1e-9);
        CHECK_FALSE(sim.frame_delivered(handle.frame_id));
        sim.run_until(expected + 1e-9);
        CHECK(sim.frame_delivered(handle.frame_id));
    }
}

TEST_CASE("send under loss") {
    SUBCASE("zero loss always delivers") {
        gs::SimNet sim(small_config(2, 9));
        const auto keys = sim.overlay().live_keys();
        for (int i = 0; i < 50; ++i) {
            const auto h = sim.send(keys[0], keys[1], {42}, 4);
            sim.run_all();
            REQUIRE(sim.frame_delivered(h.frame_id));
        }
    }

    SUBCASE("total loss never delivers") {
        gs::SimConfig cfg = small_config(2, 10);
        cfg.loss = 0.999999;  // loss must stay < 1; this is effectively ell = 1
        gs::SimNet sim(cfg);
        const auto keys = sim.overlay().live_keys();
        for (int i = 0; i < 20; ++i) {
            const auto h = sim.send(keys[0], keys[1], {42}, 4);
            sim.run_all();
            REQUIRE_FALSE(sim.frame_delivered(h.frame_id));
        }
    }

    SUBCASE("frame delivery rate matches the binomial prediction") {
        gs::SimConfig cfg = small_config(2, 11);
        cfg.loss = 0.05;
        gs::SimNet sim(cfg);
        const auto keys = sim.overlay().live_keys();
        const int frames = 10000;
        int delivered = 0;
        for (int i = 0; i < frames; ++i) {
            const auto h = sim.send(keys[0], keys[1], {1, 2, 3, 4, 5, 6, 7, 8}, 4);
            sim.run_all();
            if (sim.frame_delivered(h.frame_id)) ++delivered;
        }
        // oracle: all five shards survive, or exactly one of five is lost
        const double p = std::pow(0.95, 5) + 5 * 0.05 * std::pow(0.95, 4);
        CHECK(static_cast<double>(delivered) / frames == doctest::Approx(p).epsilon(0.0105));
    }
}

TEST_CASE("broadcast") {
    SUBCASE("single node sends nothing") {
        gs::SimNet sim(small_config(1, 13));
        const auto m = sim.broadcast(sim.overlay().live_keys()[0], {1});
        CHECK(m.reached == 1);
        CHECK(m.messages == 0);
    }

    SUBCASE("two nodes, one message") {
        gs::SimNet sim(small_config(2, 14));
        const auto m = sim.broadcast(sim.overlay().live_keys()[0], {1});
        CHECK(m.reached == 2);
        CHECK(m.messages == 1);
    }

    SUBCASE("sixteen nodes: everyone reached once, messages within bounds") {
        gs::SimNet sim(small_config(16, 15));
        const auto m = sim.broadcast(sim.overlay().live_keys()[3], {1});
        CHECK(m.reached == 16);
        CHECK(m.messages >= 15);
        CHECK(m.messages <= 16 * 4);
    }

    SUBCASE("broadcast reaches every live node exactly once at any size") {
        for (int n : {8, 32, 64}) {
            gs::SimNet sim(small_config(n, 16 + n));
            const auto m = sim.broadcast(sim.overlay().live_keys()[0], {1});
            REQUIRE(m.reached == static_cast<size_t>(n));
            const int logn = static_cast<int>(std::ceil(std::log2(n)));
            REQUIRE(m.messages >= static_cast<size_t>(n - 1));
            REQUIRE(m.messages <= static_cast<size_t>(n) * logn);
        }
    }
}

TEST_CASE("churn") {
    SUBCASE("zero rates change nothing") {
        gs::SimNet sim(small_config(8, 21));
        const auto before = sim.overlay().live_count();
        sim.churn_step();
        CHECK(sim.overlay().live_count() == before);
    }

    SUBCASE("failing an exact fraction is exact bookkeeping") {
        gs::SimNet sim(small_config(40, 22));
        const auto failed = sim.fail_fraction(0.10);
        CHECK(failed.size() == 4);
        CHECK(sim.overlay().live_count() == 36);
    }

    SUBCASE("join/fail equilibrium keeps the population near N0") {
        // symmetric birth-death walk: sd after 100 epochs is ~14, so the
        // +-20% band needs a population where that is comfortable margin
        gs::SimConfig cfg = small_config(200, 23);
        cfg.churn.join_rate = 1.0;
        cfg.churn.fail_rate = 1.0;
        gs::SimNet sim(cfg);
        for (int epoch = 0; epoch < 100; ++epoch) {
            sim.churn_step();
            sim.stabilize_round();
        }
        const double n = static_cast<double>(sim.overlay().live_count());
        CHECK(n >= 200 * 0.8);
        CHECK(n <= 200 * 1.2);
    }
}

TEST_CASE("baseline flat chord") {
    Rng rng(31);

    SUBCASE("perfect ring: worst case hops is exactly log2 N (oracle)") {
        // greedy clockwise on 16 equally spaced keys with exact fingers
        const int m = 16;
        std::vector<uint64_t> keys;
        for (int i = 0; i < 16; ++i) keys.push_back(static_cast<uint64_t>(i) << 12);
        auto hops_between = [&](size_t src, size_t dst) {
            const uint64_t mask = (1ull << m) - 1;
            uint64_t cur = keys[src];
            const uint64_t target = keys[dst];
            int hops = 0;
            while (cur != target) {
                const uint64_t remaining = (target - cur) & mask;
                uint64_t step = 1ull << 12;  // successor stride on this ring
                for (int j = 1; j <= 4; ++j) {
                    const uint64_t offset = 1ull << (m - j);
                    if (offset <= remaining) {
                        step = offset;
                        break;
                    }
                }
                cur = (cur + step) & mask;
                ++hops;
            }
            return hops;
        };
        int worst = 0;
        for (size_t a = 0; a < 16; ++a)
            for (size_t b = 0; b < 16; ++b) worst = std::max(worst, hops_between(a, b));
        CHECK(worst == 4);  // log2(16)
    }

    SUBCASE("random keys: delivery always succeeds; mean hops near half log2 N") {
        std::vector<Vec2> positions;
        Rng prng(5);
        for (int i = 0; i < 256; ++i) positions.push_back({prng.uniform(0, 1000), prng.uniform(0, 1000)});
        gs::LinkModel link(1000, 1.0, {1.0}, 0.0);
        gs::FlatChord chord(positions, link, 32, 99);
        double hops = 0;
        int count = 0;
        for (int t = 0; t < 2000; ++t) {
            const size_t src = prng.next_below(chord.size());
            const size_t dst = prng.next_below(chord.size());
            if (src == dst) continue;
            const auto p = gs::baseline_flat_chord_route(chord, src, chord.key_of(dst), rng);
            REQUIRE(p.delivered);
            hops += p.hops;
            ++count;
        }
        const double mean = hops / count;
        CHECK(mean >= 0.4 * 8);
        CHECK(mean <= 0.6 * 8);
    }
}

TEST_CASE("baseline xor overlay") {
    Rng rng(41);
    std::vector<Vec2> positions;
    Rng prng(6);
    for (int i = 0; i < 256; ++i) positions.push_back({prng.uniform(0, 1000), prng.uniform(0, 1000)});
    gs::LinkModel link(1000, 1.0, {1.0}, 0.0);
    gs::XorOverlay xnet(positions, link, 7);

    SUBCASE("src equal to dst is a zero-hop path") {
        const auto p = gs::baseline_xor_route(xnet, 5, xnet.id_of(5), rng);
        CHECK(p.delivered);
        CHECK(p.hops == 0);
    }

    SUBCASE("mean hops at N=256 stays at or under log2 N") {
        double hops = 0;
        int count = 0;
        for (int t = 0; t < 2000; ++t) {
            const size_t src = prng.next_below(xnet.size());
            const size_t dst = prng.next_below(xnet.size());
            if (src == dst) continue;
            const auto p = gs::baseline_xor_route(xnet, src, xnet.id_of(dst), rng);
            hops += p.hops;
            ++count;
        }
        CHECK(hops / count <= 8.0);
    }
}

TEST_CASE("event queue enforces the configured hard cap") {
    gs::SimConfig cfg;
    cfg.nodes = 2;
    cfg.seed = 77;
    cfg.m_bits = 16;
    cfg.event_cap = 8;
    gs::SimNet sim(cfg);
    CHECK_THROWS_AS(
        [&] {
            for (int i = 0; i < 64; ++i)
                sim.schedule(1.0, gs::EventAction::Timer, [] {});
        }(),
        Error);
}

TEST_CASE("determinism: identical seed and config replay identically") {
    auto run = [](uint64_t seed) {
        gs::SimConfig cfg = small_config(24, seed);
        cfg.loss = 0.02;
        cfg.jitter = 3.0;
        gs::SimNet sim(cfg);
        const auto keys = sim.overlay().live_keys();
        std::string log;
        char buf[64];
        Rng pick(99);
        for (int i = 0; i < 50; ++i) {
            const uint64_t src = keys[pick.next_below(keys.size())];
            const uint64_t dst = keys[pick.next_below(keys.size())];
            if (src == dst) continue;
            const auto res = sim.route_and_learn(src, {dst, 16});
            std::snprintf(buf, sizeof(buf), "%d:%zu:%.9g;", static_cast<int>(res.status),
                          res.path.hops.size(), res.path.total_latency);
            log += buf;
            const auto h = sim.send(src, dst, {1, 2, 3, 4}, 4);
            sim.run_all();
            log += sim.frame_delivered(h.frame_id) ? 'D' : 'L';
        }
        return log;
    };
    CHECK(run(1234) == run(1234));
    CHECK(run(1234) != run(4321));  // different seed, different trace
}
