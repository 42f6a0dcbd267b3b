#include "steps/keysteps.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <json.hpp>

#include "steps/errors.hpp"
#include "steps/rng.hpp"

namespace steps {

void ExtractConfig::validate() const {
    if (num_clusters < 1) throw ConfigError("num_clusters must be >= 1");
    if (background_ratio < 0.0 || background_ratio >= 1.0) throw ConfigError("background_ratio in [0,1)");
    if (!(gamma_split > 0.0)) throw ConfigError("gamma_split must be positive");
    const auto algos = supported_clusterings();
    if (std::find(algos.begin(), algos.end(), clustering) == algos.end()) {
        std::string msg = "unknown clustering algorithm '" + clustering + "', supported:";
        for (const auto& a : algos) msg += " " + a;
        throw ConfigError(msg);
    }
}

std::vector<std::string> supported_clusterings() { return {"kmeans"}; }

namespace {

void assign_points(const MatrixD& x, const MatrixD& centers, VectorI& y, VectorD& d) {
    const auto T = x.rows();
    const auto K = centers.rows();
    y.resize(T);
    d.resize(T);
    for (Eigen::Index t = 0; t < T; ++t) {
        int best = 0;
        double best_d2 = std::numeric_limits<double>::infinity();
        for (Eigen::Index k = 0; k < K; ++k) {
            const double d2 = (x.row(t) - centers.row(k)).squaredNorm();
            if (d2 < best_d2) {
                best_d2 = d2;
                best = int(k);
            }
        }
        y[t] = best;
        d[t] = std::sqrt(best_d2);
    }
}

MatrixD kmeanspp_init(const MatrixD& x, int k, Rng& rng) {
    const auto T = x.rows();
    MatrixD centers(k, x.cols());
    std::uniform_int_distribution<Eigen::Index> first(0, T - 1);
    centers.row(0) = x.row(first(rng));
    VectorD d2 = (x.rowwise() - centers.row(0)).rowwise().squaredNorm();
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    for (int c = 1; c < k; ++c) {
        const double total = d2.sum();
        Eigen::Index pick = 0;
        if (total > 0.0) {
            const double target = uni(rng) * total;
            double acc = 0.0;
            for (Eigen::Index t = 0; t < T; ++t) {
                acc += d2[t];
                if (acc >= target) {
                    pick = t;
                    break;
                }
            }
        } else {
            pick = Eigen::Index(first(rng));
        }
        centers.row(c) = x.row(pick);
        d2 = d2.cwiseMin((x.rowwise() - centers.row(c)).rowwise().squaredNorm());
    }
    return centers;
}

}  // namespace

ClusterResult cluster_features(const MatrixD& features, int k, const std::string& algorithm, std::uint64_t seed) {
    if (algorithm != "kmeans") {
        std::string msg = "unknown clustering algorithm '" + algorithm + "', supported:";
        for (const auto& a : supported_clusterings()) msg += " " + a;
        throw ConfigError(msg);
    }
    const auto T = features.rows();
    if (T < k) throw DataError("cluster_features: fewer points than clusters");

    constexpr int kRestarts = 10;
    constexpr int kMaxIter = 300;
    constexpr double kTol = 1e-6;

    ClusterResult best;
    double best_inertia = std::numeric_limits<double>::infinity();
    for (int restart = 0; restart < kRestarts; ++restart) {
        Rng rng(derive_seed(seed, std::uint64_t(restart)));
        MatrixD centers = kmeanspp_init(features, k, rng);
        VectorI y;
        VectorD d;
        double prev_inertia = std::numeric_limits<double>::infinity();
        for (int it = 0; it < kMaxIter; ++it) {
            assign_points(features, centers, y, d);
            MatrixD sums = MatrixD::Zero(k, features.cols());
            VectorI counts = VectorI::Zero(k);
            for (Eigen::Index t = 0; t < T; ++t) {
                sums.row(y[t]) += features.row(t);
                counts[y[t]] += 1;
            }
            for (int c = 0; c < k; ++c) {
                if (counts[c] > 0) {
                    centers.row(c) = sums.row(c) / double(counts[c]);
                } else {
                    // re-seed an empty cluster from the farthest point
                    Eigen::Index far = 0;
                    d.maxCoeff(&far);
                    centers.row(c) = features.row(far);
                    d[far] = 0.0;
                }
            }
            assign_points(features, centers, y, d);
            const double inertia = d.squaredNorm();
            if (prev_inertia - inertia <= kTol) break;
            prev_inertia = inertia;
        }
        const double inertia = d.squaredNorm();
        if (inertia < best_inertia) {
            best_inertia = inertia;
            best.centers = centers;
            best.assignments = y;
            best.distances = d;
        }
    }
    return best;
}

std::vector<int> background_reject(const std::vector<int>& indices, const VectorD& distances, double alpha) {
    if (alpha <= 0.0 || indices.empty()) return indices;
    const int remove = int(std::ceil(alpha * double(indices.size())));
    // rank by distance descending, ties: larger index removed first
    std::vector<int> order = indices;
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        if (distances[a] != distances[b]) return distances[a] > distances[b];
        return a > b;
    });
    std::vector<int> removed(order.begin(), order.begin() + std::min<std::size_t>(std::size_t(remove), order.size()));
    std::vector<int> out;
    out.reserve(indices.size());
    for (int idx : indices) {
        if (std::find(removed.begin(), removed.end(), idx) == removed.end()) out.push_back(idx);
    }
    return out;
}

std::vector<std::vector<int>> split_to_segments(const std::vector<int>& indices, double gamma_split,
                                                const VectorD& timestamps) {
    std::vector<std::vector<int>> segments;
    if (indices.empty()) return segments;
    segments.push_back({indices.front()});
    for (std::size_t i = 1; i < indices.size(); ++i) {
        const double gap = timestamps[indices[i]] - timestamps[indices[i - 1]];
        if (gap > gamma_split) segments.push_back({});
        segments.back().push_back(indices[i]);
    }
    return segments;
}

KeyStepResult extract_key_steps(const MatrixD& qtilde, const VectorD& timestamps, const ExtractConfig& cfg) {
    cfg.validate();
    const auto T = qtilde.rows();
    if (timestamps.size() != T) throw DataError("extract_key_steps: timestamps length mismatch");
    ClusterResult cl = cluster_features(qtilde, cfg.num_clusters, cfg.clustering, cfg.seed);

    KeyStepResult result;
    result.centers = cl.centers;
    for (int k = 0; k < cfg.num_clusters; ++k) {
        std::vector<int> members;
        for (Eigen::Index t = 0; t < T; ++t)
            if (cl.assignments[t] == k) members.push_back(int(t));
        if (members.empty()) continue;
        const std::vector<int> kept = background_reject(members, cl.distances, cfg.background_ratio);
        for (const auto& segment : split_to_segments(kept, cfg.gamma_split, timestamps)) {
            int pick = segment.front();
            for (int idx : segment)
                if (cl.distances[idx] < cl.distances[pick]) pick = idx;  // ties keep the earliest
            result.steps.push_back({pick, timestamps[pick], k, cl.distances[pick]});
        }
    }
    std::sort(result.steps.begin(), result.steps.end(),
              [](const KeyStep& a, const KeyStep& b) { return a.time_s < b.time_s; });
    return result;
}

std::string KeyStepResult::to_json() const {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& s : steps) {
        arr.push_back({{"frame", s.frame}, {"time_s", s.time_s}, {"cluster", s.cluster}, {"distance", s.distance}});
    }
    nlohmann::json j;
    j["key_steps"] = std::move(arr);
    return j.dump(2);
}

}  // namespace steps
