#pragma once

#include <cstdint>
#include <vector>

#include "steps/types.hpp"

namespace steps {

// Synthetic procedural dataset with known step structure. Each video is a
// sequence of contiguous step segments with optional background gaps; every
// frame's feature is its segment's prototype plus Gaussian noise.
struct SynthConfig {
    int num_videos = 2;
    int num_steps = 5;          // K_true
    int frames_per_video = 500; // T
    std::vector<int> dims = {32, 32};  // one entry per modality
    double fps = 10.0;
    double background_fraction = 0.0;
    double repeat_probability = 0.0;   // chance a step recurs in a distant segment
    double cue_noise = 0.0;            // per-modality noise scale
    std::uint64_t seed = 0;

    int num_modalities() const { return int(dims.size()); }
    void validate() const;  // throws ConfigError
};

struct SynthGroundTruth {
    // prototypes[m] is (K_true + 1) x D_m, row K_true = background prototype
    std::vector<MatrixF> prototypes;
    std::vector<VectorI> step_labels;   // per video, -1 background
    std::vector<VectorI> phase_labels;  // per video, background = K_true
};

std::pair<Manifest, SynthGroundTruth> generate(const SynthConfig& config);

// Accuracy of a nearest-prototype classifier on raw concatenated features,
// an upper-bound sanity signal (background counts as class K_true).
double separability_report(const Manifest& manifest, const SynthGroundTruth& gt);

}  // namespace steps
