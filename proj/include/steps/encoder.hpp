#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "steps/types.hpp"
#include "steps/rng.hpp"

namespace steps {

enum class PosEncPlacement {
    after_input_proj,   // project raw to model_dim, then add encoding
    before_input_proj,  // add encoding at raw dimension, then project
    attention_only,     // add encoding to attention query/key inputs only
};

enum class ProjectionActivation { gelu, identity };

struct EncoderConfig {
    int num_layers = 2;
    int num_heads = 2;
    int model_dim = 128;
    int mlp_hidden = 128;
    double positional_base = 10000.0;
    PosEncPlacement pos_placement = PosEncPlacement::attention_only;
    ProjectionActivation proj_activation = ProjectionActivation::gelu;
    bool proj_bias = true;

    void validate() const;  // throws ConfigError
};

struct TensorSpec {
    std::string name;
    Eigen::Index rows = 0, cols = 0, offset = 0;
};

// Named views into one flat parameter (or gradient) vector. Keeping all
// weights in a single buffer lets the optimizer, checkpoint writer and
// finite-difference probes treat a modality's parameters as one vector.
class ParamLayout {
public:
    void add(const std::string& name, Eigen::Index rows, Eigen::Index cols);
    Eigen::Index total_size() const { return total_; }
    const std::vector<TensorSpec>& specs() const { return specs_; }
    const TensorSpec& spec(const std::string& name) const;

    Eigen::Map<MatrixD> view(VectorD& buf, const std::string& name) const;
    Eigen::Map<const MatrixD> view(const VectorD& buf, const std::string& name) const;

private:
    std::vector<TensorSpec> specs_;
    std::unordered_map<std::string, std::size_t> index_;
    Eigen::Index total_ = 0;
};

// Weights of one modality's temporal encoder + projection head.
struct ModalityParams {
    EncoderConfig config;
    int input_dim = 0;
    ParamLayout layout;
    VectorD flat;

    ModalityParams() = default;
    ModalityParams(const EncoderConfig& cfg, int input_dim);

    Eigen::Map<MatrixD> tensor(const std::string& name) { return layout.view(flat, name); }
    Eigen::Map<const MatrixD> tensor(const std::string& name) const { return layout.view(flat, name); }
    Eigen::Index param_count() const { return flat.size(); }

    // fan-in scaled uniform weights, zero biases, unit layer-norm gains
    void init(Rng& rng);
};

struct EncoderParams {
    std::vector<std::string> modality_names;
    std::vector<ModalityParams> modalities;

    ModalityParams& at(const std::string& name);
    const ModalityParams& at(const std::string& name) const;
};

// Cached intermediates of one forward pass, consumed by the backward pass.
struct LayerCache {
    MatrixD x, h1, q, k, v, attn_concat, x2, h2, ffn_pre, ffn_act;
    std::vector<MatrixD> attn;  // per head, N x N softmax weights
    VectorD ln1_mu, ln1_inv, ln2_mu, ln2_inv;
};

struct EncodeCache {
    MatrixD input;  // what the input projection saw (raw, or raw + encoding)
    MatrixD pe;     // model_dim encoding, kept for attention_only placement
    std::vector<LayerCache> layers;
    MatrixD out;
};

struct ProjectCache {
    MatrixD qtilde, p1_pre, p1_act, z;
    VectorD znorm;
};

// row n: sin(pos_n / base^{2i/D}) at column 2i, cos at 2i+1
MatrixD positional_encoding(const VectorD& positions, int dim, double base);

// raw -> adapted features q~ (N x model_dim). Positions fed to the sinusoid
// are timestamps * fps, i.e. original frame indices.
MatrixD encode(const MatrixD& raw, const VectorD& timestamps, double fps,
               const ModalityParams& params, EncodeCache* cache = nullptr);

// q~ -> L2-normalized projection q (row norms 1 within 1e-6)
MatrixD project(const MatrixD& qtilde, const ModalityParams& params, ProjectCache* cache = nullptr);

// Accumulate parameter gradients into grad (same layout as params.flat).
// project_backward also returns dL/dq~ for chaining into encode_backward.
MatrixD project_backward(const MatrixD& dq, const ProjectCache& cache, const ModalityParams& params,
                         VectorD& grad);
void encode_backward(const MatrixD& dqtilde, const EncodeCache& cache, const ModalityParams& params,
                     VectorD& grad);

}  // namespace steps
