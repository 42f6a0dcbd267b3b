#pragma once

#include <string>
#include <vector>

#include "steps/types.hpp"

namespace steps {

struct ExtractConfig {
    int num_clusters = 7;       // K
    double background_ratio = 0.1;  // alpha
    double gamma_split = 2.0;   // seconds between segments of one cluster
    std::string clustering = "kmeans";
    std::uint64_t seed = 0;

    void validate() const;  // throws ConfigError
};

struct ClusterResult {
    MatrixD centers;       // K x D
    VectorI assignments;   // T
    VectorD distances;     // T, distance to own center
};

struct KeyStep {
    int frame = 0;
    double time_s = 0.0;
    int cluster = 0;
    double distance = 0.0;
};

struct KeyStepResult {
    std::vector<KeyStep> steps;  // sorted by timestamp
    MatrixD centers;

    std::string to_json() const;
};

std::vector<std::string> supported_clusterings();

// k-means++ seeding, 10 restarts keeping best inertia, 300 iteration cap.
// Empty clusters are re-seeded from the farthest point. Deterministic.
ClusterResult cluster_features(const MatrixD& features, int k, const std::string& algorithm, std::uint64_t seed);

// Drops the ceil(alpha * n) indices with the largest distance
// (ties: larger index removed first). Input order preserved.
std::vector<int> background_reject(const std::vector<int>& indices, const VectorD& distances, double alpha);

// Cuts between consecutive indices whose timestamp gap exceeds gamma_split.
std::vector<std::vector<int>> split_to_segments(const std::vector<int>& indices, double gamma_split,
                                                const VectorD& timestamps);

// Algorithm: cluster, reject background per cluster, split into temporal
// segments, pick the min-distance frame per segment (ties: earliest),
// order everything by timestamp.
KeyStepResult extract_key_steps(const MatrixD& qtilde, const VectorD& timestamps, const ExtractConfig& cfg);

}  // namespace steps
