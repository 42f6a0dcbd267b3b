#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "steps/types.hpp"

namespace steps {

enum class Averaging { per_key_step, overall };

struct StepScore {
    int step = -1;
    int cluster = -1;  // -1 = no cluster matched this step
    double precision = 0.0, recall = 0.0, f1 = 0.0, iou = 0.0;
};

struct KslScores {
    Averaging mode = Averaging::overall;
    std::vector<StepScore> per_step;
    double precision = 0.0, recall = 0.0, f1 = 0.0, iou = 0.0;
};

struct TauPair {
    std::string video_a, video_b;
    double tau = 0.0;
};

struct EvalReport {
    KslScores ksl_per_step, ksl_overall;
    std::map<std::string, KslScores> baselines;  // name -> scores (same mode as main)
    std::vector<TauPair> tau_pairs;
    double tau_mean = 0.0;
    std::map<double, double> phase_accuracy;  // label fraction -> accuracy

    std::string to_json() const;
};

// Injective cluster -> step map maximizing total frame overlap (background
// gt frames excluded). Deterministic: among optimal matchings, prefers the
// lowest step id for the lowest cluster id, and so on.
std::vector<std::pair<int, int>> hungarian_match(const VectorI& pred_labels, const VectorI& gt_labels);

KslScores ksl_metrics(const VectorI& pred_labels, const VectorI& gt_labels, Averaging mode);

// Linear probe (multinomial logistic regression) on a stratified fraction
// of the training frames; returns per-frame test accuracy.
double phase_classification(const MatrixD& train_x, const VectorI& train_y, const MatrixD& test_x,
                            const VectorI& test_y, double fraction, std::uint64_t seed);

// Rank correlation of cross-video nearest-neighbor retrieval order.
// Ties: nearest neighbor at the lowest index; zero products count discordant.
double kendalls_tau(const MatrixD& emb_a, const MatrixD& emb_b);

VectorI baseline_random(int num_frames, int num_clusters, std::uint64_t seed);
VectorI baseline_uniform(int num_frames, int num_clusters);

}  // namespace steps
