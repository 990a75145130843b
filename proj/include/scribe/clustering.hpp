#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "scribe/backend.hpp"
#include "scribe/trajectory.hpp"

namespace scribe {

struct ClusterParams {
    int min_cluster_size = 5;
    int min_samples = 5;
    int k_fallback = 0;  // 0 = auto: max(1, round(noise_count / min_cluster_size))
    std::string metric = "cosine";
    std::uint64_t seed = 0;

    bool operator==(const ClusterParams&) const = default;
};

enum class ClusterSource { kDensity, kFallback };

std::string to_string(ClusterSource source);
ClusterSource cluster_source_from_string(const std::string& s);

struct ClusterAssignment {
    TripleRef ref;
    int cluster_id = 0;
    ClusterSource source = ClusterSource::kDensity;
    double membership_strength = 1.0;

    bool operator==(const ClusterAssignment&) const = default;
};

// Ordered so iteration (and therefore every downstream artifact) is
// deterministic for a given corpus.
using EmbeddingMap = std::map<TripleRef, EmbeddingVector>;

struct ClusterModel {
    std::vector<ClusterAssignment> assignments;  // sorted by ref
    std::map<int, EmbeddingVector> centroids;    // arithmetic mean of member embeddings
    std::map<int, ClusterSource> sources;
    ClusterParams params;

    std::vector<TripleRef> members_of(int cluster_id) const;
    std::vector<int> cluster_ids() const;

    bool operator==(const ClusterModel&) const = default;
};

nlohmann::json cluster_model_to_json(const ClusterModel& model);
ClusterModel cluster_model_from_json(const nlohmann::json& j);
void save_cluster_model(const ClusterModel& model, const std::filesystem::path& path);
ClusterModel load_cluster_model(const std::filesystem::path& path);

// Embeds "subgoal\nskill" per triple, deduplicating identical texts so each
// distinct text hits the backend once. Backend failures carry the first
// affected triple ref.
EmbeddingMap embed_skills(const std::vector<Trajectory>& corpus, EmbedBackend& backend,
                          std::size_t batch_size = 64);

std::string skill_text(const SubgoalTriple& triple);

// --- density clustering internals exposed for oracle tests ---

struct MstEdge {
    int a = 0;
    int b = 0;
    double weight = 0.0;
};

// Minimum spanning tree over the mutual-reachability graph: cosine distance
// on L2-normalized vectors, core distance = distance to the min_samples-th
// nearest neighbor counting the point itself.
std::vector<MstEdge> mutual_reachability_mst(const std::vector<EmbeddingVector>& points,
                                             int min_samples);

// Condensed cluster tree (node 0 is the root). `points` holds (point index,
// lambda at which the point left this cluster).
struct CondensedNode {
    int id = 0;
    int parent = -1;
    double birth_lambda = 0.0;
    double death_lambda = 0.0;
    double stability = 0.0;
    std::vector<int> children;
    std::vector<std::pair<int, double>> points;
};

struct CondensedTree {
    std::vector<CondensedNode> nodes;
    std::vector<int> selected;  // ids chosen by excess-of-mass extraction
};

// Deterministic k-means (k-means++ seeding from `seed`) used for the noise
// fallback; exposed for the seeding tests.
std::vector<int> kmeans_partition(const std::vector<EmbeddingVector>& points, int k,
                                  std::uint64_t seed, int max_iterations = 100);

// Density pipeline with k-means fallback on noise points. `diagnostics`,
// when non-null, receives the condensed tree and selection.
ClusterModel cluster_density(const EmbeddingMap& embeddings, const ClusterParams& params,
                             CondensedTree* diagnostics = nullptr);

// Re-clusters the union and aligns cluster ids to the old model by greedy
// maximal centroid cosine similarity (threshold 0.8); unmatched clusters get
// fresh ids after the old maximum.
ClusterModel refresh_clusters(const ClusterModel& old_model, const EmbeddingMap& new_embeddings,
                              const ClusterParams& params);

}  // namespace scribe
