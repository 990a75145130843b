#include "scribe/clustering.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

#include "scribe/errors.hpp"
#include "scribe/rng.hpp"
#include "scribe/vecmath.hpp"

namespace scribe {

using nlohmann::json;

namespace {

// Lambda substituted for 1/d when d is (near) zero, so duplicate points keep
// all stability arithmetic finite.
constexpr double kLargeLambda = 1e12;
constexpr double kZeroDistance = 1e-12;

double dist_to_lambda(double d) {
    if (d < kZeroDistance) {
        return kLargeLambda;
    }
    return std::min(1.0 / d, kLargeLambda);
}

std::vector<std::vector<double>> normalize_all(const std::vector<EmbeddingVector>& points) {
    std::vector<std::vector<double>> out;
    out.reserve(points.size());
    for (const auto& p : points) {
        out.push_back(normalized(p.values));
    }
    return out;
}

double unit_cosine_distance(const std::vector<double>& a, const std::vector<double>& b) {
    double d = 1.0 - dot(a, b);
    if (d < 0.0) d = 0.0;
    return d;
}

std::vector<double> core_distances(const std::vector<std::vector<double>>& pts, int min_samples) {
    const int n = int(pts.size());
    const int k = std::min(min_samples, n);
    std::vector<double> core(n);
    std::vector<double> row(n);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            row[j] = (i == j) ? 0.0 : unit_cosine_distance(pts[i], pts[j]);
        }
        std::nth_element(row.begin(), row.begin() + (k - 1), row.end());
        core[i] = row[k - 1];
    }
    return core;
}

// Single-linkage dendrogram node; leaves are point indices 0..n-1.
struct DendroNode {
    int left = -1;
    int right = -1;
    double dist = 0.0;
    int size = 1;
};

struct UnionFind {
    explicit UnionFind(int n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }

    int find(int x) {
        while (parent[x] != x) {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        return x;
    }

    std::vector<int> parent;
};

}  // namespace

std::string to_string(ClusterSource source) {
    return source == ClusterSource::kDensity ? "density" : "fallback";
}

ClusterSource cluster_source_from_string(const std::string& s) {
    if (s == "density") return ClusterSource::kDensity;
    if (s == "fallback") return ClusterSource::kFallback;
    throw ParseError("unknown cluster source \"" + s + "\"");
}

std::vector<TripleRef> ClusterModel::members_of(int cluster_id) const {
    std::vector<TripleRef> out;
    for (const auto& a : assignments) {
        if (a.cluster_id == cluster_id) {
            out.push_back(a.ref);
        }
    }
    return out;
}

std::vector<int> ClusterModel::cluster_ids() const {
    std::vector<int> out;
    for (const auto& [id, c] : centroids) {
        (void)c;
        out.push_back(id);
    }
    return out;
}

std::string skill_text(const SubgoalTriple& triple) {
    return triple.subgoal + "\n" + triple.skill;
}

EmbeddingMap embed_skills(const std::vector<Trajectory>& corpus, EmbedBackend& backend,
                          std::size_t batch_size) {
    std::vector<TripleRef> refs;
    std::vector<std::string> texts;
    for (const auto& traj : corpus) {
        for (std::size_t i = 0; i < traj.triples.size(); ++i) {
            refs.push_back({traj.id, i});
            texts.push_back(skill_text(traj.triples[i]));
        }
    }
    if (refs.empty()) {
        throw std::invalid_argument("embed_skills: corpus has no triples");
    }

    // Deduplicate by content so repeated texts hit the backend once.
    std::vector<std::string> unique_texts;
    std::map<std::string, std::size_t> text_slot;
    for (const auto& t : texts) {
        if (text_slot.emplace(t, unique_texts.size()).second) {
            unique_texts.push_back(t);
        }
    }

    std::vector<EmbeddingVector> vectors(unique_texts.size());
    for (std::size_t offset = 0; offset < unique_texts.size(); offset += batch_size) {
        const std::size_t count = std::min(batch_size, unique_texts.size() - offset);
        std::vector<std::string> batch(unique_texts.begin() + offset,
                                       unique_texts.begin() + offset + count);
        std::vector<EmbeddingVector> result;
        try {
            result = backend.embed(batch);
        } catch (const std::exception& e) {
            // Name a triple from the failing batch for diagnosis.
            for (std::size_t t = 0; t < texts.size(); ++t) {
                const std::size_t slot = text_slot.at(texts[t]);
                if (slot >= offset && slot < offset + count) {
                    throw BackendError("embed_skills: failed embedding triple " +
                                       refs[t].trajectory_id + "#" +
                                       std::to_string(refs[t].triple_index) + ": " + e.what());
                }
            }
            throw;
        }
        if (result.size() != count) {
            throw BackendError("embed_skills: backend returned wrong vector count");
        }
        for (std::size_t i = 0; i < count; ++i) {
            vectors[offset + i] = std::move(result[i]);
        }
    }

    const std::size_t dim = vectors.front().dim();
    for (const auto& v : vectors) {
        if (v.dim() != dim) {
            throw BackendError("embed_skills: inconsistent embedding dimensions");
        }
    }

    EmbeddingMap out;
    for (std::size_t t = 0; t < refs.size(); ++t) {
        out[refs[t]] = vectors[text_slot.at(texts[t])];
    }
    return out;
}

std::vector<MstEdge> mutual_reachability_mst(const std::vector<EmbeddingVector>& points,
                                             int min_samples) {
    const int n = int(points.size());
    if (n < 2) {
        return {};
    }
    const auto pts = normalize_all(points);
    const auto core = core_distances(pts, min_samples);

    // Prim with O(n) state; distances computed on the fly.
    std::vector<bool> in_tree(n, false);
    std::vector<double> best(n, std::numeric_limits<double>::infinity());
    std::vector<int> best_from(n, 0);
    std::vector<MstEdge> edges;
    edges.reserve(n - 1);

    int current = 0;
    in_tree[0] = true;
    for (int step = 1; step < n; ++step) {
        for (int j = 0; j < n; ++j) {
            if (in_tree[j]) continue;
            const double d = unit_cosine_distance(pts[current], pts[j]);
            const double mr = std::max({core[current], core[j], d});
            if (mr < best[j]) {
                best[j] = mr;
                best_from[j] = current;
            }
        }
        int next = -1;
        for (int j = 0; j < n; ++j) {
            if (!in_tree[j] && (next == -1 || best[j] < best[next])) {
                next = j;
            }
        }
        edges.push_back({best_from[next], next, best[next]});
        in_tree[next] = true;
        current = next;
    }
    return edges;
}

std::vector<int> kmeans_partition(const std::vector<EmbeddingVector>& points, int k,
                                  std::uint64_t seed, int max_iterations) {
    const int n = int(points.size());
    if (n == 0) {
        throw std::invalid_argument("kmeans_partition: no points");
    }
    if (k < 1) {
        throw std::invalid_argument("kmeans_partition: k must be >= 1");
    }
    if (k >= n) {
        std::vector<int> labels(n);
        std::iota(labels.begin(), labels.end(), 0);
        return labels;
    }

    const std::size_t dim = points.front().dim();
    auto sq_dist = [&](const std::vector<double>& a, const std::vector<double>& b) {
        double s = 0.0;
        for (std::size_t i = 0; i < dim; ++i) {
            const double d = a[i] - b[i];
            s += d * d;
        }
        return s;
    };

    std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);

    // k-means++ seeding.
    std::vector<std::vector<double>> centers;
    centers.reserve(k);
    centers.push_back(points[uniform_index(rng, n)].values);
    std::vector<double> d2(n);
    while (int(centers.size()) < k) {
        double total = 0.0;
        for (int i = 0; i < n; ++i) {
            double m = std::numeric_limits<double>::infinity();
            for (const auto& c : centers) {
                m = std::min(m, sq_dist(points[i].values, c));
            }
            d2[i] = m;
            total += m;
        }
        int chosen = -1;
        if (total <= 0.0) {
            // Remaining mass is zero (duplicates); take the first point not
            // already a center.
            for (int i = 0; i < n && chosen < 0; ++i) {
                bool is_center = false;
                for (const auto& c : centers) {
                    if (points[i].values == c) {
                        is_center = true;
                        break;
                    }
                }
                if (!is_center) chosen = i;
            }
            if (chosen < 0) chosen = 0;
        } else {
            const double u = uniform01(rng) * total;
            double acc = 0.0;
            for (int i = 0; i < n; ++i) {
                acc += d2[i];
                if (u < acc) {
                    chosen = i;
                    break;
                }
            }
            if (chosen < 0) chosen = n - 1;
        }
        centers.push_back(points[chosen].values);
    }

    std::vector<int> labels(n, -1);
    for (int iter = 0; iter < max_iterations; ++iter) {
        bool changed = false;
        for (int i = 0; i < n; ++i) {
            int arg = 0;
            double best = sq_dist(points[i].values, centers[0]);
            for (int c = 1; c < k; ++c) {
                const double d = sq_dist(points[i].values, centers[c]);
                if (d < best) {
                    best = d;
                    arg = c;
                }
            }
            if (labels[i] != arg) {
                labels[i] = arg;
                changed = true;
            }
        }
        if (!changed) {
            break;
        }
        std::vector<std::vector<double>> sums(k, std::vector<double>(dim, 0.0));
        std::vector<int> counts(k, 0);
        for (int i = 0; i < n; ++i) {
            for (std::size_t d = 0; d < dim; ++d) {
                sums[labels[i]][d] += points[i].values[d];
            }
            ++counts[labels[i]];
        }
        for (int c = 0; c < k; ++c) {
            if (counts[c] == 0) {
                // Reseed an empty cluster from the point farthest from its center.
                int far = 0;
                double far_d = -1.0;
                for (int i = 0; i < n; ++i) {
                    const double d = sq_dist(points[i].values, centers[labels[i]]);
                    if (d > far_d) {
                        far_d = d;
                        far = i;
                    }
                }
                centers[c] = points[far].values;
            } else {
                for (std::size_t d = 0; d < dim; ++d) {
                    centers[c][d] = sums[c][d] / double(counts[c]);
                }
            }
        }
    }
    return labels;
}

namespace {

struct CondenseResult {
    CondensedTree tree;
    // point index -> condensed node id it is attached to, and its lambda
    std::vector<int> point_node;
    std::vector<double> point_lambda;
};

CondenseResult condense_dendrogram(const std::vector<DendroNode>& dendro, int n_points, int root,
                                   int min_cluster_size) {
    CondenseResult res;
    res.point_node.assign(n_points, 0);
    res.point_lambda.assign(n_points, kLargeLambda);

    auto& nodes = res.tree.nodes;
    nodes.push_back(CondensedNode{0, -1, 0.0, 0.0, 0.0, {}, {}});

    auto collect_leaves = [&](int node, std::vector<int>& out) {
        std::vector<int> stack{node};
        while (!stack.empty()) {
            const int cur = stack.back();
            stack.pop_back();
            if (cur < n_points) {
                out.push_back(cur);
            } else {
                stack.push_back(dendro[cur - n_points].left);
                stack.push_back(dendro[cur - n_points].right);
            }
        }
    };

    auto subtree_size = [&](int node) {
        return node < n_points ? 1 : dendro[node - n_points].size;
    };

    struct Frame {
        int dendro_node;
        int condensed_id;
    };
    std::vector<Frame> stack{{root, 0}};
    while (!stack.empty()) {
        Frame f = stack.back();
        stack.pop_back();

        int node = f.dendro_node;
        const int cid = f.condensed_id;
        // Follow the chain while one side keeps falling out.
        while (true) {
            if (node < n_points) {
                // Single point left in the cluster; it persists to the end of
                // the chain and leaves at the lambda of its last merge, which
                // was already recorded by the caller loop below.
                res.point_node[node] = cid;
                res.point_lambda[node] = nodes[cid].death_lambda;
                nodes[cid].points.emplace_back(node, nodes[cid].death_lambda);
                break;
            }
            const DendroNode& d = dendro[node - n_points];
            const double lambda = dist_to_lambda(d.dist);
            const int sl = subtree_size(d.left);
            const int sr = subtree_size(d.right);
            const bool left_big = sl >= min_cluster_size;
            const bool right_big = sr >= min_cluster_size;

            if (left_big && right_big) {
                nodes[cid].death_lambda = lambda;
                const int cl = int(nodes.size());
                nodes.push_back(CondensedNode{cl, cid, lambda, lambda, 0.0, {}, {}});
                const int cr = int(nodes.size());
                nodes.push_back(CondensedNode{cr, cid, lambda, lambda, 0.0, {}, {}});
                nodes[cid].children = {cl, cr};
                stack.push_back({d.left, cl});
                stack.push_back({d.right, cr});
                break;
            }
            if (!left_big && !right_big) {
                // Cluster ends here; everything left leaves at this lambda.
                std::vector<int> leaves;
                collect_leaves(node, leaves);
                for (int p : leaves) {
                    res.point_node[p] = cid;
                    res.point_lambda[p] = lambda;
                    nodes[cid].points.emplace_back(p, lambda);
                }
                nodes[cid].death_lambda = lambda;
                break;
            }
            // One small side falls out; the big side continues as the same
            // condensed cluster.
            const int small = left_big ? d.right : d.left;
            const int big = left_big ? d.left : d.right;
            std::vector<int> leaves;
            collect_leaves(small, leaves);
            for (int p : leaves) {
                res.point_node[p] = cid;
                res.point_lambda[p] = lambda;
                nodes[cid].points.emplace_back(p, lambda);
            }
            nodes[cid].death_lambda = lambda;  // updated when the chain continues deeper
            node = big;
        }
    }

    // Stabilities, bottom-up (children always have larger ids).
    std::vector<int> total_points(nodes.size(), 0);
    for (int id = int(nodes.size()) - 1; id >= 0; --id) {
        total_points[id] = int(nodes[id].points.size());
        for (int child : nodes[id].children) {
            total_points[id] += total_points[child];
        }
        double s = 0.0;
        for (const auto& [p, lambda] : nodes[id].points) {
            (void)p;
            s += lambda - nodes[id].birth_lambda;
        }
        if (!nodes[id].children.empty()) {
            int passed = 0;
            for (int child : nodes[id].children) {
                passed += total_points[child];
            }
            s += double(passed) * (nodes[id].death_lambda - nodes[id].birth_lambda);
        }
        nodes[id].stability = s;
    }
    return res;
}

// Excess-of-mass selection over the condensed tree, root excluded.
std::vector<int> select_excess_of_mass(const CondensedTree& tree) {
    const auto& nodes = tree.nodes;
    std::vector<double> sel_total(nodes.size(), 0.0);
    std::vector<bool> wins(nodes.size(), false);
    for (int id = int(nodes.size()) - 1; id >= 1; --id) {
        if (nodes[id].children.empty()) {
            wins[id] = true;
            sel_total[id] = nodes[id].stability;
            continue;
        }
        double child_sum = 0.0;
        for (int child : nodes[id].children) {
            child_sum += sel_total[child];
        }
        if (nodes[id].stability >= child_sum) {
            wins[id] = true;
            sel_total[id] = nodes[id].stability;
        } else {
            sel_total[id] = child_sum;
        }
    }

    std::vector<int> selected;
    std::vector<int> stack(nodes[0].children.begin(), nodes[0].children.end());
    while (!stack.empty()) {
        const int id = stack.back();
        stack.pop_back();
        if (wins[id]) {
            selected.push_back(id);
        } else {
            for (int child : nodes[id].children) {
                stack.push_back(child);
            }
        }
    }
    std::sort(selected.begin(), selected.end());
    return selected;
}

// Data-driven membership cutoff when the condensed tree never splits: points
// above the largest multiplicative gap in sorted lambda form the single
// density cluster, the rest are noise. A gap below 3x means no structure and
// everything stays in.
std::vector<bool> root_membership(const std::vector<double>& point_lambda, int min_cluster_size) {
    const int n = int(point_lambda.size());
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](int a, int b) { return point_lambda[a] > point_lambda[b]; });

    int cut = n;  // index into `order`; everything before the cut is a member
    double best_ratio = 3.0;
    for (int i = 0; i + 1 < n; ++i) {
        const double hi = point_lambda[order[i]];
        const double lo = point_lambda[order[i + 1]];
        if (lo <= 0.0) {
            continue;
        }
        const double ratio = hi / lo;
        if (ratio > best_ratio) {
            best_ratio = ratio;
            cut = i + 1;
        }
    }
    if (cut < min_cluster_size) {
        cut = n;
    }
    std::vector<bool> member(n, false);
    for (int i = 0; i < cut; ++i) {
        member[order[i]] = true;
    }
    return member;
}

EmbeddingVector raw_mean(const std::vector<EmbeddingVector>& points, const std::vector<int>& idx) {
    std::vector<const std::vector<double>*> refs;
    refs.reserve(idx.size());
    for (int i : idx) {
        refs.push_back(&points[i].values);
    }
    return EmbeddingVector{mean_vector(refs)};
}

}  // namespace

ClusterModel cluster_density(const EmbeddingMap& embeddings, const ClusterParams& params,
                             CondensedTree* diagnostics) {
    const int mcs = params.min_cluster_size;
    if (mcs < 2) {
        throw std::invalid_argument("cluster_density: min_cluster_size must be >= 2");
    }
    if (params.min_samples < 1) {
        throw std::invalid_argument("cluster_density: min_samples must be >= 1");
    }

    std::vector<TripleRef> refs;
    std::vector<EmbeddingVector> raw;
    refs.reserve(embeddings.size());
    raw.reserve(embeddings.size());
    for (const auto& [ref, vec] : embeddings) {
        refs.push_back(ref);
        raw.push_back(vec);
    }
    const int n = int(refs.size());
    if (n < mcs) {
        throw std::invalid_argument("cluster_density: need at least min_cluster_size points, got " +
                                    std::to_string(n));
    }
    const std::size_t dim = raw.front().dim();
    for (const auto& v : raw) {
        if (v.dim() != dim) {
            throw std::invalid_argument("cluster_density: inconsistent embedding dimensions");
        }
    }

    const auto pts = normalize_all(raw);

    // Zero-distance degeneracy: identical points form one cluster.
    bool all_identical = true;
    for (int i = 1; i < n && all_identical; ++i) {
        if (unit_cosine_distance(pts[0], pts[i]) >= kZeroDistance) {
            all_identical = false;
        }
    }

    std::vector<int> labels(n, -1);  // -1 = noise
    std::vector<ClusterSource> label_source;
    int next_id = 0;

    if (all_identical) {
        std::fill(labels.begin(), labels.end(), 0);
        label_source.push_back(ClusterSource::kDensity);
        next_id = 1;
        if (diagnostics) {
            *diagnostics = CondensedTree{};
        }
    } else {
        const auto edges_raw = mutual_reachability_mst(raw, params.min_samples);
        std::vector<MstEdge> edges = edges_raw;
        std::sort(edges.begin(), edges.end(), [](const MstEdge& x, const MstEdge& y) {
            if (x.weight != y.weight) return x.weight < y.weight;
            if (x.a != y.a) return x.a < y.a;
            return x.b < y.b;
        });

        // Single-linkage dendrogram via union-find.
        std::vector<DendroNode> dendro;
        dendro.reserve(n - 1);
        UnionFind uf(2 * n - 1);
        std::vector<int> component_node(2 * n - 1);
        std::iota(component_node.begin(), component_node.end(), 0);
        int next_internal = n;
        for (const auto& e : edges) {
            const int ra = uf.find(e.a);
            const int rb = uf.find(e.b);
            const int na = component_node[ra];
            const int nb = component_node[rb];
            const int sa = na < n ? 1 : dendro[na - n].size;
            const int sb = nb < n ? 1 : dendro[nb - n].size;
            dendro.push_back({na, nb, e.weight, sa + sb});
            const int merged = next_internal++;
            uf.parent[ra] = merged;
            uf.parent[rb] = merged;
            component_node[merged] = merged;
        }
        const int root = next_internal - 1;

        auto condensed = condense_dendrogram(dendro, n, root, mcs);
        auto selected = select_excess_of_mass(condensed.tree);

        if (!selected.empty()) {
            // Map each point to the selected ancestor-or-self of its node.
            std::vector<int> selected_ancestor(condensed.tree.nodes.size(), -1);
            for (int id : selected) {
                selected_ancestor[id] = id;
            }
            for (std::size_t id = 1; id < condensed.tree.nodes.size(); ++id) {
                if (selected_ancestor[id] < 0) {
                    const int parent = condensed.tree.nodes[id].parent;
                    if (parent >= 0 && selected_ancestor[parent] >= 0) {
                        selected_ancestor[id] = selected_ancestor[parent];
                    }
                }
            }
            // Order clusters by their smallest member point for stable ids.
            std::map<int, std::vector<int>> members_by_node;
            for (int p = 0; p < n; ++p) {
                const int node = condensed.point_node[p];
                const int anc = node >= 0 ? selected_ancestor[node] : -1;
                if (anc >= 0) {
                    members_by_node[anc].push_back(p);
                }
            }
            std::vector<std::pair<int, int>> ordering;  // (min point, node id)
            for (const auto& [node, members] : members_by_node) {
                ordering.emplace_back(*std::min_element(members.begin(), members.end()), node);
            }
            std::sort(ordering.begin(), ordering.end());
            for (const auto& [min_point, node] : ordering) {
                (void)min_point;
                for (int p : members_by_node[node]) {
                    labels[p] = next_id;
                }
                label_source.push_back(ClusterSource::kDensity);
                ++next_id;
            }
        } else {
            // The tree never split: single-cluster data. Keep the dense core
            // as one density cluster and hand the sparse remainder to the
            // fallback stage.
            const auto member = root_membership(condensed.point_lambda, mcs);
            for (int p = 0; p < n; ++p) {
                if (member[p]) {
                    labels[p] = 0;
                }
            }
            label_source.push_back(ClusterSource::kDensity);
            next_id = 1;
        }

        if (diagnostics) {
            condensed.tree.selected = selected;
            *diagnostics = condensed.tree;
        }
    }

    // K-means fallback over noise points.
    std::vector<int> noise_idx;
    for (int p = 0; p < n; ++p) {
        if (labels[p] < 0) {
            noise_idx.push_back(p);
        }
    }
    if (!noise_idx.empty()) {
        const int noise_count = int(noise_idx.size());
        int k = params.k_fallback > 0
                    ? params.k_fallback
                    : int(std::max<long>(1, std::lround(double(noise_count) / double(mcs))));
        k = std::min(k, noise_count);

        std::vector<EmbeddingVector> noise_pts;
        noise_pts.reserve(noise_count);
        for (int p : noise_idx) {
            noise_pts.push_back(EmbeddingVector{pts[p]});
        }
        const auto sub_labels = kmeans_partition(noise_pts, k, params.seed);

        // Order fallback clusters by smallest member point; drop empties.
        std::map<int, std::vector<int>> groups;
        for (int i = 0; i < noise_count; ++i) {
            groups[sub_labels[i]].push_back(noise_idx[i]);
        }
        std::vector<std::pair<int, int>> ordering;
        for (const auto& [sub, members] : groups) {
            ordering.emplace_back(*std::min_element(members.begin(), members.end()), sub);
        }
        std::sort(ordering.begin(), ordering.end());
        for (const auto& [min_point, sub] : ordering) {
            (void)min_point;
            for (int p : groups[sub]) {
                labels[p] = next_id;
            }
            label_source.push_back(ClusterSource::kFallback);
            ++next_id;
        }
    }

    // Assemble the model: centroids are arithmetic means of the raw member
    // embeddings; membership strength is 1 at the centroid, 0 at the
    // farthest member.
    ClusterModel model;
    model.params = params;
    std::map<int, std::vector<int>> members;
    for (int p = 0; p < n; ++p) {
        members[labels[p]].push_back(p);
    }
    std::vector<double> strength(n, 1.0);
    for (const auto& [id, idx] : members) {
        EmbeddingVector centroid = raw_mean(raw, idx);
        double max_d = 0.0;
        std::vector<double> ds(idx.size());
        for (std::size_t i = 0; i < idx.size(); ++i) {
            ds[i] = cosine_distance(raw[idx[i]].values, centroid.values);
            max_d = std::max(max_d, ds[i]);
        }
        for (std::size_t i = 0; i < idx.size(); ++i) {
            strength[idx[i]] = max_d > 0.0 ? 1.0 - ds[i] / max_d : 1.0;
        }
        model.centroids[id] = std::move(centroid);
        model.sources[id] = label_source[id];
    }
    model.assignments.reserve(n);
    for (int p = 0; p < n; ++p) {
        model.assignments.push_back({refs[p], labels[p], label_source[labels[p]], strength[p]});
    }
    return model;
}

ClusterModel refresh_clusters(const ClusterModel& old_model, const EmbeddingMap& new_embeddings,
                              const ClusterParams& params) {
    for (const auto& a : old_model.assignments) {
        if (new_embeddings.find(a.ref) == new_embeddings.end()) {
            throw std::invalid_argument("refresh_clusters: new embeddings missing triple " +
                                        a.ref.trajectory_id + "#" +
                                        std::to_string(a.ref.triple_index));
        }
    }

    ClusterModel fresh = cluster_density(new_embeddings, params);

    // Greedy centroid matching, highest cosine similarity first, 0.8 floor.
    struct Pair {
        double sim;
        int old_id;
        int new_id;
    };
    std::vector<Pair> pairs;
    for (const auto& [old_id, old_c] : old_model.centroids) {
        for (const auto& [new_id, new_c] : fresh.centroids) {
            if (old_c.dim() == new_c.dim()) {
                pairs.push_back({cosine_similarity(old_c.values, new_c.values), old_id, new_id});
            }
        }
    }
    std::sort(pairs.begin(), pairs.end(), [](const Pair& x, const Pair& y) {
        if (x.sim != y.sim) return x.sim > y.sim;
        if (x.old_id != y.old_id) return x.old_id < y.old_id;
        return x.new_id < y.new_id;
    });

    std::map<int, int> new_to_old;
    std::map<int, bool> old_taken;
    for (const auto& p : pairs) {
        if (p.sim < 0.8) {
            break;
        }
        if (old_taken.count(p.old_id) || new_to_old.count(p.new_id)) {
            continue;
        }
        new_to_old[p.new_id] = p.old_id;
        old_taken[p.old_id] = true;
    }

    int next_fresh = 0;
    for (const auto& [id, c] : old_model.centroids) {
        (void)c;
        next_fresh = std::max(next_fresh, id + 1);
    }
    std::map<int, int> remap;
    for (const auto& [new_id, c] : fresh.centroids) {
        (void)c;
        auto it = new_to_old.find(new_id);
        remap[new_id] = it != new_to_old.end() ? it->second : next_fresh++;
    }

    ClusterModel out;
    out.params = params;
    for (auto& a : fresh.assignments) {
        a.cluster_id = remap.at(a.cluster_id);
        out.assignments.push_back(a);
    }
    for (const auto& [new_id, c] : fresh.centroids) {
        out.centroids[remap.at(new_id)] = c;
    }
    for (const auto& [new_id, s] : fresh.sources) {
        out.sources[remap.at(new_id)] = s;
    }
    return out;
}

json cluster_model_to_json(const ClusterModel& model) {
    json params;
    params["min_cluster_size"] = model.params.min_cluster_size;
    params["min_samples"] = model.params.min_samples;
    params["k_fallback"] = model.params.k_fallback;
    params["metric"] = model.params.metric;
    params["seed"] = model.params.seed;

    json clusters = json::array();
    for (const auto& [id, centroid] : model.centroids) {
        json c;
        c["id"] = id;
        c["source"] = to_string(model.sources.at(id));
        c["centroid"] = centroid.values;
        json members = json::array();
        for (const auto& a : model.assignments) {
            if (a.cluster_id == id) {
                members.push_back({{"trajectory_id", a.ref.trajectory_id},
                                   {"triple_index", a.ref.triple_index},
                                   {"strength", a.membership_strength}});
            }
        }
        c["members"] = std::move(members);
        clusters.push_back(std::move(c));
    }
    return json{{"params", params}, {"clusters", clusters}};
}

ClusterModel cluster_model_from_json(const json& j) {
    ClusterModel model;
    const json& p = j.at("params");
    model.params.min_cluster_size = p.at("min_cluster_size").get<int>();
    model.params.min_samples = p.at("min_samples").get<int>();
    model.params.k_fallback = p.at("k_fallback").get<int>();
    model.params.metric = p.at("metric").get<std::string>();
    model.params.seed = p.at("seed").get<std::uint64_t>();

    for (const auto& c : j.at("clusters")) {
        const int id = c.at("id").get<int>();
        const ClusterSource source = cluster_source_from_string(c.at("source").get<std::string>());
        model.centroids[id] = EmbeddingVector{c.at("centroid").get<std::vector<double>>()};
        model.sources[id] = source;
        for (const auto& m : c.at("members")) {
            ClusterAssignment a;
            a.ref = {m.at("trajectory_id").get<std::string>(), m.at("triple_index").get<std::size_t>()};
            a.cluster_id = id;
            a.source = source;
            a.membership_strength = m.at("strength").get<double>();
            model.assignments.push_back(a);
        }
    }
    std::sort(model.assignments.begin(), model.assignments.end(),
              [](const ClusterAssignment& x, const ClusterAssignment& y) { return x.ref < y.ref; });
    return model;
}

void save_cluster_model(const ClusterModel& model, const std::filesystem::path& path) {
    write_file_atomic(path, cluster_model_to_json(model).dump(2) + "\n");
}

ClusterModel load_cluster_model(const std::filesystem::path& path) {
    try {
        return cluster_model_from_json(json::parse(read_file(path)));
    } catch (const json::exception& e) {
        throw ParseError("cluster model " + path.string() + ": " + e.what());
    }
}

}  // namespace scribe
