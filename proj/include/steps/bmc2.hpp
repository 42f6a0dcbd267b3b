#pragma once

#include <string>
#include <vector>

#include "steps/types.hpp"

namespace steps {

enum class BootstrapVariant {
    union_pos_neg,   // W~ replaces W for positives and negatives (default)
    union_neg_only,  // positives from W; pairs in W~ \ W dropped from the loss
    sampled_only,    // W' alone
    none,            // plain sigma-window CIDM
};

enum class LossReduction { mean_over_pairs, sum };

struct LossConfig {
    double sigma = 10.0;   // seconds
    double margin = 2.0;   // zeta
    MatrixD lambda;        // M x M pair weights; empty = defaults
    bool bootstrap_enabled = true;
    std::string bootstrap_modality;  // empty = first modality; "concat" = all
    BootstrapVariant bootstrap_variant = BootstrapVariant::union_pos_neg;
    LossReduction reduction = LossReduction::mean_over_pairs;
    bool delta_include_anchor = true;  // anchor's zero distance counts toward delta
    int negative_cap = 0;  // >0: keep only that many temporally nearest negatives per anchor

    void validate(int num_modalities) const;  // throws ConfigError
    // lambda defaults: all-ones for M <= 2; for M > 2, lambda_uu = 1 and
    // lambda_uv = 1 only when u is the first (appearance) modality.
    MatrixD resolved_lambda(int num_modalities) const;
};

using BoolMatrix = Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic>;

struct WindowSet {
    std::vector<int> anchors;   // row indices with computed windows
    BoolMatrix W;               // sigma-window, N x N, symmetric
    BoolMatrix W_prime;         // bootstrapped rows (anchor rows only)
    BoolMatrix W_tilde;         // min(W + W', 1)
    VectorD delta;              // per-anchor bootstrap threshold

    std::string to_json() const;
};

BoolMatrix sigma_window(const VectorD& timestamps, double sigma);

struct BootstrapRow {
    double delta = 0.0;
    Eigen::Matrix<std::uint8_t, Eigen::Dynamic, 1> w_prime, w_tilde;
};

// raw: bootstrap-modality features over the sampled sub-sequence.
BootstrapRow bootstrap_window(const MatrixD& raw, const BoolMatrix& W, int anchor,
                              bool delta_include_anchor = true);

// Eq-style pair loss: w * d/gamma + (1-w) * gamma * max(0, zeta - d),
// gamma = (t_a - t_j)^2 + 1.
double cidm_pair_loss(const VectorD& q_a, const VectorD& q_j, double t_a, double t_j, int w, double zeta);

struct Bmc2Result {
    double loss = 0.0;
    WindowSet windows;
    std::vector<MatrixD> grad_q;  // dL/dQ_u, filled when with_grad
};

// Q: per-modality N x D unit-row projections. positions feed gamma
// (chunk indices); timestamps (seconds) feed the sigma-window.
// valid: optional per-frame mask, pairs touching an invalid frame are skipped.
Bmc2Result bmc2_loss(const std::vector<MatrixD>& Q, const MatrixD& raw_bootstrap, const VectorD& timestamps,
                     const VectorD& positions, const LossConfig& cfg, bool with_grad = false,
                     const std::vector<bool>* valid = nullptr);

// Gathers the bootstrap-modality raw rows per cfg.bootstrap_modality
// ("concat" concatenates all modalities column-wise, in manifest order).
MatrixD gather_bootstrap_features(const std::vector<MatrixD>& raw_per_modality,
                                  const std::vector<std::string>& modality_names, const LossConfig& cfg);

}  // namespace steps
