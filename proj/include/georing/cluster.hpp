// Hierarchical clustering of node positions.
//
// Each tree node carries a Gaussian fitted to its members; children come from
// k-means seeding refined by EM on the member set. Membership and descent both
// use mixture responsibilities, so a point belongs to the component most
// likely to have produced it. Prefixes are base-k digit strings and identify
// clusters at every level.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "georing/errors.hpp"
#include "georing/geom.hpp"
#include "georing/rng.hpp"

namespace georing::cluster {

constexpr double kVarianceFloor = 1e-6;
constexpr double kTwoPi = 2.0 * 3.14159265358979323846;

struct Gaussian {
    Vec2 mean;
    Mat2 covariance = Mat2::identity();
};

struct GmmComponent {
    double weight = 1.0;
    Gaussian gaussian;
};

struct Gmm {
    std::vector<GmmComponent> components;
};

inline double gaussian_logpdf(const Gaussian& g, const Vec2& x) {
    const double det = g.covariance.det();
    const Mat2 inv = g.covariance.inverse();
    const Vec2 d = x - g.mean;
    const double q = d.dot(inv.mul(d));
    return -0.5 * q - std::log(kTwoPi) - 0.5 * std::log(det);
}

inline double gaussian_pdf(const Gaussian& g, const Vec2& x) { return std::exp(gaussian_logpdf(g, x)); }

inline double gmm_pdf(const Gmm& gmm, const Vec2& x) {
    double p = 0.0;
    for (const auto& c : gmm.components) p += c.weight * gaussian_pdf(c.gaussian, x);
    return p;
}

// MLE mean/covariance (1/n normalization), eigenvalues floored.
inline Gaussian fit_gaussian(std::span<const Vec2> pts, double floor = kVarianceFloor) {
    Gaussian g;
    const double n = static_cast<double>(pts.size());
    if (pts.empty()) {
        g.covariance = Mat2::diag(floor, floor);
        return g;
    }
    for (const auto& p : pts) g.mean += p;
    g.mean = g.mean / n;
    Mat2 cov;
    for (const auto& p : pts) {
        const Vec2 d = p - g.mean;
        cov.m00 += d.x * d.x;
        cov.m01 += d.x * d.y;
        cov.m11 += d.y * d.y;
    }
    cov = cov * (1.0 / n);
    cov.m10 = cov.m01;
    g.covariance = floor_eigenvalues(cov, floor);
    return g;
}

// --- k-means -------------------------------------------------------------

struct KmeansResult {
    std::vector<Vec2> centroids;
    std::vector<int> assignments;
};

inline size_t count_distinct(std::span<const Vec2> pts) {
    std::vector<Vec2> v(pts.begin(), pts.end());
    std::sort(v.begin(), v.end(), [](const Vec2& a, const Vec2& b) {
        return a.x != b.x ? a.x < b.x : a.y < b.y;
    });
    return static_cast<size_t>(std::unique(v.begin(), v.end()) - v.begin());
}

// Lloyd's algorithm with k-means++ seeding; empty clusters are re-seeded to
// the point farthest from its current centroid.
inline KmeansResult kmeans(std::span<const Vec2> pts, int k, uint64_t seed,
                           int max_iter = 100, double tol = 1e-6) {
    if (k < 1 || pts.empty()) throw DegenerateK("k must be >= 1 and points nonempty");
    if (static_cast<size_t>(k) > count_distinct(pts)) throw DegenerateK("k exceeds distinct points");

    Rng rng(hash_combine(seed, 0x6b6d65616e73ull));
    const size_t n = pts.size();
    KmeansResult res;
    res.assignments.assign(n, 0);

    // k-means++ seeding
    res.centroids.push_back(pts[rng.next_below(n)]);
    std::vector<double> d2(n);
    while (res.centroids.size() < static_cast<size_t>(k)) {
        double total = 0.0;
        for (size_t i = 0; i < n; ++i) {
            double best = std::numeric_limits<double>::max();
            for (const auto& c : res.centroids) best = std::min(best, (pts[i] - c).norm2());
            d2[i] = best;
            total += best;
        }
        size_t pick = 0;
        if (total > 0.0) {
            double target = rng.next_double() * total, acc = 0.0;
            for (size_t i = 0; i < n; ++i) {
                acc += d2[i];
                if (acc >= target) {
                    pick = i;
                    break;
                }
            }
        } else {
            pick = rng.next_below(n);
        }
        res.centroids.push_back(pts[pick]);
    }

    std::vector<Vec2> sums(k);
    std::vector<size_t> counts(k);
    for (int iter = 0; iter < max_iter; ++iter) {
        for (size_t i = 0; i < n; ++i) {
            int best = 0;
            double bd = (pts[i] - res.centroids[0]).norm2();
            for (int c = 1; c < k; ++c) {
                const double d = (pts[i] - res.centroids[c]).norm2();
                if (d < bd) {
                    bd = d;
                    best = c;
                }
            }
            res.assignments[i] = best;
        }
        std::fill(sums.begin(), sums.end(), Vec2{});
        std::fill(counts.begin(), counts.end(), size_t{0});
        for (size_t i = 0; i < n; ++i) {
            sums[res.assignments[i]] += pts[i];
            ++counts[res.assignments[i]];
        }
        // re-seed empties to the globally farthest point
        for (int c = 0; c < k; ++c) {
            if (counts[c] != 0) continue;
            size_t far = 0;
            double fd = -1.0;
            for (size_t i = 0; i < n; ++i) {
                const double d = (pts[i] - res.centroids[res.assignments[i]]).norm2();
                if (d > fd && counts[res.assignments[i]] > 1) {
                    fd = d;
                    far = i;
                }
            }
            --counts[res.assignments[far]];
            sums[res.assignments[far]] = sums[res.assignments[far]] + (pts[far] * -1.0);
            res.assignments[far] = c;
            sums[c] = pts[far];
            counts[c] = 1;
        }
        double moved = 0.0;
        for (int c = 0; c < k; ++c) {
            const Vec2 nc = counts[c] ? sums[c] / static_cast<double>(counts[c]) : res.centroids[c];
            moved = std::max(moved, (nc - res.centroids[c]).norm());
            res.centroids[c] = nc;
        }
        if (moved < tol) break;
    }
    // final assignment against settled centroids
    for (size_t i = 0; i < n; ++i) {
        int best = 0;
        double bd = (pts[i] - res.centroids[0]).norm2();
        for (int c = 1; c < k; ++c) {
            const double d = (pts[i] - res.centroids[c]).norm2();
            if (d < bd) {
                bd = d;
                best = c;
            }
        }
        res.assignments[i] = best;
    }
    return res;
}

// --- EM ------------------------------------------------------------------

struct EmTrace {
    std::vector<double> log_likelihood;  // per accepted iteration
};

// Maximum-likelihood GMM fit via EM, seeded from a k-means result.
// Responsibilities run in the log domain; covariances are floored so
// coincident points cannot collapse a component.
inline Gmm em_fit(std::span<const Vec2> pts, int k, const KmeansResult& init,
                  double tol = 1e-6, int max_iter = 200, EmTrace* trace = nullptr) {
    if (k < 1 || pts.size() < static_cast<size_t>(k)) throw DegenerateK("need at least k points");
    const size_t n = pts.size();

    Gmm gmm;
    gmm.components.resize(k);
    {
        std::vector<std::vector<Vec2>> groups(k);
        for (size_t i = 0; i < n; ++i) groups[init.assignments[i]].push_back(pts[i]);
        for (int c = 0; c < k; ++c) {
            auto& comp = gmm.components[c];
            comp.weight = std::max(1e-12, static_cast<double>(groups[c].size()) / static_cast<double>(n));
            comp.gaussian = groups[c].empty() ? Gaussian{init.centroids[c], Mat2::identity()}
                                              : fit_gaussian(groups[c]);
        }
        double wsum = 0.0;
        for (auto& c : gmm.components) wsum += c.weight;
        for (auto& c : gmm.components) c.weight /= wsum;
    }

    std::vector<double> logr(n * k);
    double prev_ll = -std::numeric_limits<double>::max();
    for (int iter = 0; iter < max_iter; ++iter) {
        // E step
        double ll = 0.0;
        for (size_t i = 0; i < n; ++i) {
            double mx = -std::numeric_limits<double>::max();
            for (int c = 0; c < k; ++c) {
                logr[i * k + c] = std::log(gmm.components[c].weight) +
                                  gaussian_logpdf(gmm.components[c].gaussian, pts[i]);
                mx = std::max(mx, logr[i * k + c]);
            }
            double s = 0.0;
            for (int c = 0; c < k; ++c) s += std::exp(logr[i * k + c] - mx);
            const double lse = mx + std::log(s);
            ll += lse;
            for (int c = 0; c < k; ++c) logr[i * k + c] = std::exp(logr[i * k + c] - lse);
        }
        if (trace) trace->log_likelihood.push_back(ll);
        if (ll - prev_ll < tol && iter > 0) break;
        prev_ll = ll;

        // M step
        for (int c = 0; c < k; ++c) {
            double nk = 0.0;
            Vec2 mu;
            for (size_t i = 0; i < n; ++i) {
                nk += logr[i * k + c];
                mu += pts[i] * logr[i * k + c];
            }
            auto& comp = gmm.components[c];
            if (nk < 1e-12) {
                comp.weight = 1e-12;
                continue;  // collapsed component keeps its parameters
            }
            mu = mu / nk;
            Mat2 cov;
            for (size_t i = 0; i < n; ++i) {
                const Vec2 d = pts[i] - mu;
                const double r = logr[i * k + c];
                cov.m00 += r * d.x * d.x;
                cov.m01 += r * d.x * d.y;
                cov.m11 += r * d.y * d.y;
            }
            cov = cov * (1.0 / nk);
            cov.m10 = cov.m01;
            comp.weight = nk / static_cast<double>(n);
            comp.gaussian.mean = mu;
            comp.gaussian.covariance = floor_eigenvalues(cov, kVarianceFloor);
        }
        double wsum = 0.0;
        for (auto& c : gmm.components) wsum += c.weight;
        for (auto& c : gmm.components) c.weight /= wsum;
    }
    return gmm;
}

// --- hierarchy -------------------------------------------------------------

struct HierarchyParams {
    int min_split_factor = 4;     // a node splits only if population >= factor * k
    size_t split_threshold = 64;  // split_cluster precondition
    size_t merge_threshold = 8;   // merge_children precondition
};

struct ClusterNode {
    std::string prefix;              // base-k digit string; empty at root
    Vec2 centroid;
    Gaussian gaussian;
    double weight = 1.0;             // mixture weight within the parent
    size_t population = 0;
    std::vector<ClusterNode> children;
    std::vector<uint32_t> members;   // indices into ClusterTree::points

    bool is_leaf() const { return children.empty(); }
};

struct ClusterTree {
    ClusterNode root;
    int k = 2;
    int h = 0;
    std::vector<Vec2> points;
    HierarchyParams params;
};

inline char digit_char(int d) { return d < 10 ? static_cast<char>('0' + d) : static_cast<char>('a' + d - 10); }

namespace detail {

inline std::vector<Vec2> member_points(const ClusterTree& tree, const ClusterNode& node) {
    std::vector<Vec2> pts;
    pts.reserve(node.members.size());
    for (uint32_t i : node.members) pts.push_back(tree.points[i]);
    return pts;
}

// Split one node into k children: k-means seeds EM, responsibilities assign
// members, ties to the lowest digit.
inline void split_node(ClusterTree& tree, ClusterNode& node, uint64_t seed) {
    const auto pts = member_points(tree, node);
    const KmeansResult km = kmeans(pts, tree.k, seed);
    const Gmm gmm = em_fit(pts, tree.k, km);

    node.children.resize(tree.k);
    for (int c = 0; c < tree.k; ++c) {
        auto& child = node.children[c];
        child.prefix = node.prefix + digit_char(c);
        child.weight = gmm.components[c].weight;
        child.gaussian = gmm.components[c].gaussian;
        child.centroid = gmm.components[c].gaussian.mean;
    }
    for (size_t i = 0; i < pts.size(); ++i) {
        int best = 0;
        double bl = -std::numeric_limits<double>::max();
        for (int c = 0; c < tree.k; ++c) {
            const double l = std::log(gmm.components[c].weight) +
                             gaussian_logpdf(gmm.components[c].gaussian, pts[i]);
            if (l > bl) {
                bl = l;
                best = c;
            }
        }
        node.children[best].members.push_back(node.members[i]);
    }
    for (auto& child : node.children) child.population = child.members.size();
}

inline void build_recursive(ClusterTree& tree, ClusterNode& node, int depth, uint64_t seed) {
    if (depth >= tree.h) return;
    if (node.population < static_cast<size_t>(tree.params.min_split_factor) * static_cast<size_t>(tree.k))
        return;
    if (count_distinct(member_points(tree, node)) < static_cast<size_t>(tree.k)) return;
    split_node(tree, node, hash_combine(seed, hash_u64(depth * 131 + node.prefix.size()) ^
                                                  hash_str(node.prefix)));
    for (auto& child : node.children) build_recursive(tree, child, depth + 1, seed);
}

}  // namespace detail

inline ClusterTree build_hierarchy(std::vector<Vec2> points, int k, int h, uint64_t seed,
                                   HierarchyParams params = {}) {
    if (points.empty()) throw DegenerateK("points must be nonempty");
    ClusterTree tree;
    tree.k = k;
    tree.h = h;
    tree.params = params;
    tree.points = std::move(points);
    tree.root.prefix = "";
    tree.root.weight = 1.0;
    tree.root.members.resize(tree.points.size());
    std::iota(tree.root.members.begin(), tree.root.members.end(), 0u);
    tree.root.population = tree.points.size();
    tree.root.gaussian = fit_gaussian(tree.points);
    tree.root.centroid = tree.root.gaussian.mean;
    detail::build_recursive(tree, tree.root, 0, seed);
    return tree;
}

inline ClusterNode* find_node(ClusterNode& node, const std::string& prefix) {
    if (node.prefix == prefix) return &node;
    for (auto& c : node.children)
        if (prefix.compare(0, c.prefix.size(), c.prefix) == 0 || c.prefix == prefix)
            if (auto* r = find_node(c, prefix)) return r;
    return nullptr;
}

inline const ClusterNode* find_node(const ClusterNode& node, const std::string& prefix) {
    return find_node(const_cast<ClusterNode&>(node), prefix);
}

inline void split_cluster(ClusterTree& tree, const std::string& prefix, uint64_t seed = 0) {
    ClusterNode* node = find_node(tree.root, prefix);
    if (!node) throw UnknownNode("no cluster '" + prefix + "'");
    if (!node->is_leaf() || node->population < tree.params.split_threshold)
        throw NoActionNeeded("split preconditions unmet");
    detail::split_node(tree, *node, hash_combine(seed, hash_str(prefix)));
}

inline void merge_children(ClusterTree& tree, const std::string& prefix) {
    ClusterNode* node = find_node(tree.root, prefix);
    if (!node) throw UnknownNode("no cluster '" + prefix + "'");
    if (node->is_leaf()) throw NoActionNeeded("leaf node");
    size_t child_pop = 0;
    for (const auto& c : node->children) child_pop += c.population;
    if (child_pop > tree.params.merge_threshold) throw NoActionNeeded("children too populous");
    node->children.clear();
    node->gaussian = fit_gaussian(detail::member_points(tree, *node));
    node->centroid = node->gaussian.mean;
    node->population = node->members.size();
}

// Descend by maximum responsibility; ties go to the lowest digit.
inline std::string cluster_path(const ClusterTree& tree, const Vec2& p) {
    const ClusterNode* node = &tree.root;
    while (!node->is_leaf()) {
        int best = 0;
        double bl = -std::numeric_limits<double>::max();
        for (size_t c = 0; c < node->children.size(); ++c) {
            const auto& child = node->children[c];
            const double l = std::log(std::max(child.weight, 1e-300)) + gaussian_logpdf(child.gaussian, p);
            if (l > bl) {
                bl = l;
                best = static_cast<int>(c);
            }
        }
        node = &node->children[best];
    }
    return node->prefix;
}

// integer id of the level-`level` cluster a path falls in (first digits, base k)
inline int cluster_index(const std::string& path, int level, int k) {
    int idx = 0;
    for (int i = 0; i < level; ++i) {
        const int d = i < static_cast<int>(path.size())
                          ? (path[i] <= '9' ? path[i] - '0' : path[i] - 'a' + 10)
                          : 0;
        idx = idx * k + d;
    }
    return idx;
}

inline int shared_prefix(const std::string& a, const std::string& b) {
    int n = 0;
    while (n < static_cast<int>(std::min(a.size(), b.size())) && a[n] == b[n]) ++n;
    return n;
}

// --- serialization ---------------------------------------------------------

inline nlohmann::json node_to_json(const ClusterNode& node) {
    nlohmann::json j;
    j["prefix"] = node.prefix;
    j["weight"] = node.weight;
    j["mean"] = {node.gaussian.mean.x, node.gaussian.mean.y};
    j["covariance"] = {node.gaussian.covariance.m00, node.gaussian.covariance.m01,
                       node.gaussian.covariance.m10, node.gaussian.covariance.m11};
    j["population"] = node.population;
    j["children"] = nlohmann::json::array();
    for (const auto& c : node.children) j["children"].push_back(node_to_json(c));
    return j;
}

inline ClusterNode node_from_json(const nlohmann::json& j) {
    ClusterNode n;
    n.prefix = j.at("prefix").get<std::string>();
    n.weight = j.at("weight").get<double>();
    n.gaussian.mean = {j.at("mean")[0].get<double>(), j.at("mean")[1].get<double>()};
    const auto& cov = j.at("covariance");
    n.gaussian.covariance = {cov[0].get<double>(), cov[1].get<double>(), cov[2].get<double>(),
                             cov[3].get<double>()};
    n.centroid = n.gaussian.mean;
    n.population = j.at("population").get<size_t>();
    for (const auto& c : j.at("children")) n.children.push_back(node_from_json(c));
    return n;
}

inline nlohmann::json tree_to_json(const ClusterTree& tree) {
    nlohmann::json j;
    j["k"] = tree.k;
    j["h"] = tree.h;
    j["root"] = node_to_json(tree.root);
    return j;
}

inline ClusterTree tree_from_json(const nlohmann::json& j) {
    ClusterTree t;
    t.k = j.at("k").get<int>();
    t.h = j.at("h").get<int>();
    t.root = node_from_json(j.at("root"));
    return t;
}

}  // namespace georing::cluster
