#pragma once

#include <optional>
#include <vector>

#include "steps/bmc2.hpp"
#include "steps/encoder.hpp"
#include "steps/types.hpp"

namespace steps {

struct TrainConfig {
    int num_chunks = 1024;        // N
    double temporal_extent = 1.0; // beta in (0, 1]
    int batch_size = 4;
    double learning_rate = 1e-3;
    int epochs = 300;
    std::optional<int> lr_drop_epoch;  // lr *= 0.1 from this epoch on
    std::uint64_t seed = 0;
    LossConfig loss;
    EncoderConfig encoder;

    void validate() const;  // throws ConfigError
};

struct TrainHistory {
    std::vector<double> epoch_loss;     // mean over batches
    std::vector<double> epoch_seconds;  // wall clock
};

struct AdamState {
    std::vector<VectorD> m, v;  // per modality, same layout as params.flat
    long step = 0;
};

// Temporal sampling augmentation: pick a beta-extent, split it into N equal
// chunks, draw one frame index per chunk. Result strictly increasing. If the
// extent is shorter than N frames the list is clamped to the extent length.
std::vector<int> sample_chunks(int num_frames, int num_chunks, double beta, Rng& rng);

// One video's sampled sub-sequence, ready for the encoder and loss.
struct VideoSample {
    std::vector<MatrixD> raw;   // per modality, N x D_i (double)
    VectorD timestamps;         // seconds of the sampled frames
    VectorD positions;          // normalized chunk indices k/N in [0,1), feed gamma
    std::vector<bool> valid;    // false for padded duplicates
    double fps = 1.0;
};

VideoSample sample_video(const VideoRecord& rec, const std::vector<std::string>& modality_names, int num_chunks,
                         double beta, Rng& rng);

// Full objective for one sampled video: encode -> project -> bmc2.
// When grads is non-null, parameter gradients are accumulated per modality.
double video_loss(const VideoSample& sample, const EncoderParams& params, const LossConfig& loss_cfg,
                  std::vector<VectorD>* grads);

EncoderParams init_params(const Manifest& manifest, const TrainConfig& cfg);

struct TrainResult {
    EncoderParams params;
    TrainHistory history;
    AdamState adam;
    int epochs_done = 0;
};

// Deterministic single-threaded training loop: per epoch, per minibatch of
// videos, sample chunks, evaluate the loss, take one Adam step.
// resume, when given, continues from a previous result's params/adam/epoch.
TrainResult train(const Manifest& manifest, const TrainConfig& cfg, const TrainResult* resume = nullptr);

// Max relative error between analytic directional derivatives of the full
// objective and central finite differences over random parameter directions.
double gradient_check(const Manifest& manifest, const TrainConfig& cfg, int num_directions = 16,
                      double eps = 1e-5);

}  // namespace steps
