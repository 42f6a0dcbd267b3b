#include "steps/encoder.hpp"

#include <cmath>
#include <sstream>

#include "steps/errors.hpp"

namespace steps {

namespace {

constexpr double kLnEps = 1e-5;
constexpr double kNormEps = 1e-12;

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x / std::sqrt(2.0))); }

double gelu_grad(double x) {
    return 0.5 * (1.0 + std::erf(x / std::sqrt(2.0))) +
           x * std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI);
}

std::string lname(int layer, const char* suffix) {
    return "layer" + std::to_string(layer) + "." + suffix;
}

// y = (x - mu) / sqrt(var + eps) * g + b, per row
MatrixD layer_norm(const MatrixD& x, const Eigen::Map<const MatrixD>& g, const Eigen::Map<const MatrixD>& b,
                   VectorD& mu, VectorD& inv) {
    const auto N = x.rows(), D = x.cols();
    mu.resize(N);
    inv.resize(N);
    MatrixD y(N, D);
    for (Eigen::Index i = 0; i < N; ++i) {
        const double m = x.row(i).mean();
        const double var = (x.row(i).array() - m).square().mean();
        const double s = 1.0 / std::sqrt(var + kLnEps);
        mu[i] = m;
        inv[i] = s;
        y.row(i) = ((x.row(i).array() - m) * s) * g.row(0).array() + b.row(0).array();
    }
    return y;
}

// Backward through layer_norm; accumulates dg, db and returns dx.
MatrixD layer_norm_backward(const MatrixD& dy, const MatrixD& x, const VectorD& mu, const VectorD& inv,
                            const Eigen::Map<const MatrixD>& g, Eigen::Map<MatrixD> dg,
                            Eigen::Map<MatrixD> db) {
    const auto N = x.rows(), D = x.cols();
    MatrixD dx(N, D);
    for (Eigen::Index i = 0; i < N; ++i) {
        const Eigen::Array<double, 1, Eigen::Dynamic> xhat = (x.row(i).array() - mu[i]) * inv[i];
        const Eigen::Array<double, 1, Eigen::Dynamic> dyr = dy.row(i).array();
        dg.row(0).array() += dyr * xhat;
        db.row(0).array() += dyr;
        const Eigen::Array<double, 1, Eigen::Dynamic> dxhat = dyr * g.row(0).array();
        const double m1 = dxhat.mean();
        const double m2 = (dxhat * xhat).mean();
        dx.row(i) = (inv[i] * (dxhat - m1 - xhat * m2)).matrix();
    }
    return dx;
}

void check_finite(const MatrixD& x, const char* where, int layer) {
    if (!x.allFinite()) {
        std::ostringstream os;
        os << "non-finite activations in " << where;
        if (layer >= 0) os << " (layer " << layer << ")";
        throw NumericError(os.str());
    }
}

}  // namespace

void EncoderConfig::validate() const {
    if (num_layers < 1 || num_heads < 1 || model_dim < 1 || mlp_hidden < 1)
        throw ConfigError("encoder dimensions must be positive");
    if (model_dim % num_heads != 0) throw ConfigError("model_dim must be divisible by num_heads");
    if (model_dim % 2 != 0) throw ConfigError("model_dim must be even for sinusoidal encoding");
    if (!(positional_base > 0.0)) throw ConfigError("positional_base must be positive");
}

void ParamLayout::add(const std::string& name, Eigen::Index rows, Eigen::Index cols) {
    index_.emplace(name, specs_.size());
    specs_.push_back({name, rows, cols, total_});
    total_ += rows * cols;
}

const TensorSpec& ParamLayout::spec(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw ConfigError("unknown parameter tensor: " + name);
    return specs_[it->second];
}

Eigen::Map<MatrixD> ParamLayout::view(VectorD& buf, const std::string& name) const {
    const auto& s = spec(name);
    return {buf.data() + s.offset, s.rows, s.cols};
}

Eigen::Map<const MatrixD> ParamLayout::view(const VectorD& buf, const std::string& name) const {
    const auto& s = spec(name);
    return {buf.data() + s.offset, s.rows, s.cols};
}

ModalityParams::ModalityParams(const EncoderConfig& cfg, int in_dim) : config(cfg), input_dim(in_dim) {
    config.validate();
    if (input_dim < 1) throw ConfigError("input_dim must be positive");
    const int D = config.model_dim;
    const int H = config.mlp_hidden;
    layout.add("input.W", input_dim, D);
    layout.add("input.b", 1, D);
    for (int l = 0; l < config.num_layers; ++l) {
        layout.add(lname(l, "ln1.g"), 1, D);
        layout.add(lname(l, "ln1.b"), 1, D);
        layout.add(lname(l, "attn.Wq"), D, D);
        layout.add(lname(l, "attn.bq"), 1, D);
        layout.add(lname(l, "attn.Wk"), D, D);
        layout.add(lname(l, "attn.bk"), 1, D);
        layout.add(lname(l, "attn.Wv"), D, D);
        layout.add(lname(l, "attn.bv"), 1, D);
        layout.add(lname(l, "attn.Wo"), D, D);
        layout.add(lname(l, "attn.bo"), 1, D);
        layout.add(lname(l, "ln2.g"), 1, D);
        layout.add(lname(l, "ln2.b"), 1, D);
        layout.add(lname(l, "ffn.W1"), D, H);
        layout.add(lname(l, "ffn.b1"), 1, H);
        layout.add(lname(l, "ffn.W2"), H, D);
        layout.add(lname(l, "ffn.b2"), 1, D);
    }
    layout.add("proj.W1", D, D);
    layout.add("proj.b1", 1, D);
    layout.add("proj.W2", D, D);
    layout.add("proj.b2", 1, D);
    flat = VectorD::Zero(layout.total_size());
}

void ModalityParams::init(Rng& rng) {
    for (const auto& s : layout.specs()) {
        auto t = layout.view(flat, s.name);
        const bool is_weight = s.name.ends_with(".W") || s.name.find(".W") != std::string::npos;
        if (s.name.ends_with(".g")) {
            t.setOnes();
        } else if (s.rows == 1 || !is_weight) {
            t.setZero();  // biases and ln shifts
        } else {
            const double bound = 1.0 / std::sqrt(double(s.rows));
            std::uniform_real_distribution<double> uni(-bound, bound);
            for (Eigen::Index c = 0; c < s.cols; ++c)
                for (Eigen::Index r = 0; r < s.rows; ++r) t(r, c) = uni(rng);
        }
    }
    if (!config.proj_bias) {
        tensor("proj.b1").setZero();
        tensor("proj.b2").setZero();
    }
}

ModalityParams& EncoderParams::at(const std::string& name) {
    for (std::size_t i = 0; i < modality_names.size(); ++i)
        if (modality_names[i] == name) return modalities[i];
    throw ConfigError("no encoder parameters for modality: " + name);
}

const ModalityParams& EncoderParams::at(const std::string& name) const {
    return const_cast<EncoderParams*>(this)->at(name);
}

MatrixD positional_encoding(const VectorD& positions, int dim, double base) {
    if (dim % 2 != 0) throw ConfigError("positional encoding dimension must be even");
    const auto N = positions.size();
    MatrixD pe(N, dim);
    for (int i = 0; i < dim / 2; ++i) {
        const double freq = std::pow(base, 2.0 * i / dim);
        for (Eigen::Index n = 0; n < N; ++n) {
            pe(n, 2 * i) = std::sin(positions[n] / freq);
            pe(n, 2 * i + 1) = std::cos(positions[n] / freq);
        }
    }
    return pe;
}

MatrixD encode(const MatrixD& raw, const VectorD& timestamps, double fps, const ModalityParams& params,
               EncodeCache* cache) {
    const auto N = raw.rows();
    const int D = params.config.model_dim;
    const int H = params.config.num_heads;
    const int dh = D / H;
    if (N < 1) throw DataError("encode: empty input");
    if (raw.cols() != params.input_dim) throw DataError("encode: raw feature dimension mismatch");
    if (timestamps.size() != N) throw DataError("encode: timestamps length mismatch");

    const VectorD positions = timestamps * fps;

    EncodeCache local;
    EncodeCache& c = cache ? *cache : local;
    c.layers.assign(std::size_t(params.config.num_layers), {});

    MatrixD x;
    c.pe.resize(0, 0);
    if (params.config.pos_placement == PosEncPlacement::before_input_proj) {
        c.input = raw + positional_encoding(positions, int(raw.cols()), params.config.positional_base);
        x = (c.input * params.tensor("input.W")).rowwise() + params.tensor("input.b").row(0);
    } else if (params.config.pos_placement == PosEncPlacement::after_input_proj) {
        c.input = raw;
        x = (c.input * params.tensor("input.W")).rowwise() + params.tensor("input.b").row(0);
        x += positional_encoding(positions, D, params.config.positional_base);
    } else {  // attention_only: the residual stream stays position-free
        c.input = raw;
        x = (c.input * params.tensor("input.W")).rowwise() + params.tensor("input.b").row(0);
        c.pe = positional_encoding(positions, D, params.config.positional_base);
    }

    const double scale = 1.0 / std::sqrt(double(dh));
    for (int l = 0; l < params.config.num_layers; ++l) {
        auto& lc = c.layers[std::size_t(l)];
        lc.x = x;
        lc.h1 = layer_norm(x, params.tensor(lname(l, "ln1.g")), params.tensor(lname(l, "ln1.b")), lc.ln1_mu,
                           lc.ln1_inv);
        const MatrixD h1qk = c.pe.size() > 0 ? MatrixD(lc.h1 + c.pe) : lc.h1;
        lc.q = (h1qk * params.tensor(lname(l, "attn.Wq"))).rowwise() + params.tensor(lname(l, "attn.bq")).row(0);
        lc.k = (h1qk * params.tensor(lname(l, "attn.Wk"))).rowwise() + params.tensor(lname(l, "attn.bk")).row(0);
        lc.v = (lc.h1 * params.tensor(lname(l, "attn.Wv"))).rowwise() + params.tensor(lname(l, "attn.bv")).row(0);
        lc.attn.assign(std::size_t(H), MatrixD());
        lc.attn_concat.resize(N, D);
        for (int h = 0; h < H; ++h) {
            MatrixD s = scale * lc.q.middleCols(h * dh, dh) * lc.k.middleCols(h * dh, dh).transpose();
            // row-wise softmax
            for (Eigen::Index i = 0; i < N; ++i) {
                Eigen::ArrayXd row = s.row(i).array();
                row -= row.maxCoeff();
                row = row.exp();
                s.row(i) = (row / row.sum()).matrix();
            }
            lc.attn[std::size_t(h)] = s;
            lc.attn_concat.middleCols(h * dh, dh) = s * lc.v.middleCols(h * dh, dh);
        }
        lc.x2 = x + ((lc.attn_concat * params.tensor(lname(l, "attn.Wo"))).rowwise() +
                     params.tensor(lname(l, "attn.bo")).row(0))
                        .matrix();
        lc.h2 = layer_norm(lc.x2, params.tensor(lname(l, "ln2.g")), params.tensor(lname(l, "ln2.b")), lc.ln2_mu,
                           lc.ln2_inv);
        lc.ffn_pre = (lc.h2 * params.tensor(lname(l, "ffn.W1"))).rowwise() + params.tensor(lname(l, "ffn.b1")).row(0);
        lc.ffn_act = lc.ffn_pre.unaryExpr([](double v) { return gelu(v); });
        x = lc.x2 + ((lc.ffn_act * params.tensor(lname(l, "ffn.W2"))).rowwise() +
                     params.tensor(lname(l, "ffn.b2")).row(0))
                        .matrix();
        check_finite(x, "encoder block", l);
    }
    c.out = x;
    return x;
}

MatrixD project(const MatrixD& qtilde, const ModalityParams& params, ProjectCache* cache) {
    if (!qtilde.allFinite()) throw NumericError("project: non-finite input");
    ProjectCache local;
    ProjectCache& c = cache ? *cache : local;
    c.qtilde = qtilde;
    c.p1_pre = qtilde * params.tensor("proj.W1");
    if (params.config.proj_bias) c.p1_pre.rowwise() += params.tensor("proj.b1").row(0);
    c.p1_act = params.config.proj_activation == ProjectionActivation::gelu
                   ? MatrixD(c.p1_pre.unaryExpr([](double v) { return gelu(v); }))
                   : c.p1_pre;
    c.z = c.p1_act * params.tensor("proj.W2");
    if (params.config.proj_bias) c.z.rowwise() += params.tensor("proj.b2").row(0);
    c.znorm = c.z.rowwise().norm();
    MatrixD q(c.z.rows(), c.z.cols());
    for (Eigen::Index i = 0; i < c.z.rows(); ++i) q.row(i) = c.z.row(i) / (c.znorm[i] + kNormEps);
    return q;
}

MatrixD project_backward(const MatrixD& dq, const ProjectCache& c, const ModalityParams& params, VectorD& grad) {
    const auto& L = params.layout;
    MatrixD dz(c.z.rows(), c.z.cols());
    for (Eigen::Index i = 0; i < c.z.rows(); ++i) {
        const double n = c.znorm[i];
        const double ne = n + kNormEps;
        if (n > 0.0) {
            const double zdot = c.z.row(i).dot(dq.row(i));
            dz.row(i) = dq.row(i) / ne - c.z.row(i) * (zdot / (n * ne * ne));
        } else {
            dz.row(i) = dq.row(i) / ne;
        }
    }
    L.view(grad, "proj.W2") += c.p1_act.transpose() * dz;
    if (params.config.proj_bias) L.view(grad, "proj.b2").row(0) += dz.colwise().sum();
    MatrixD dp1 = dz * params.tensor("proj.W2").transpose();
    if (params.config.proj_activation == ProjectionActivation::gelu) {
        dp1.array() *= c.p1_pre.unaryExpr([](double v) { return gelu_grad(v); }).array();
    }
    L.view(grad, "proj.W1") += c.qtilde.transpose() * dp1;
    if (params.config.proj_bias) L.view(grad, "proj.b1").row(0) += dp1.colwise().sum();
    return dp1 * params.tensor("proj.W1").transpose();
}

void encode_backward(const MatrixD& dqtilde, const EncodeCache& c, const ModalityParams& params, VectorD& grad) {
    const auto& L = params.layout;
    const int D = params.config.model_dim;
    const int H = params.config.num_heads;
    const int dh = D / H;
    const double scale = 1.0 / std::sqrt(double(dh));
    const auto N = dqtilde.rows();

    MatrixD dx = dqtilde;
    for (int l = params.config.num_layers - 1; l >= 0; --l) {
        const auto& lc = c.layers[std::size_t(l)];
        // FFN block: x3 = x2 + gelu(LN2(x2) W1 + b1) W2 + b2
        MatrixD dffn_act = dx * params.tensor(lname(l, "ffn.W2")).transpose();
        L.view(grad, lname(l, "ffn.W2")) += lc.ffn_act.transpose() * dx;
        L.view(grad, lname(l, "ffn.b2")).row(0) += dx.colwise().sum();
        MatrixD dffn_pre =
            (dffn_act.array() * lc.ffn_pre.unaryExpr([](double v) { return gelu_grad(v); }).array()).matrix();
        L.view(grad, lname(l, "ffn.W1")) += lc.h2.transpose() * dffn_pre;
        L.view(grad, lname(l, "ffn.b1")).row(0) += dffn_pre.colwise().sum();
        MatrixD dh2 = dffn_pre * params.tensor(lname(l, "ffn.W1")).transpose();
        MatrixD dx2 = dx + layer_norm_backward(dh2, lc.x2, lc.ln2_mu, lc.ln2_inv,
                                               params.tensor(lname(l, "ln2.g")),
                                               L.view(grad, lname(l, "ln2.g")), L.view(grad, lname(l, "ln2.b")));

        // attention block: x2 = x + (concat_h A_h V_h) Wo + bo
        MatrixD dconcat = dx2 * params.tensor(lname(l, "attn.Wo")).transpose();
        L.view(grad, lname(l, "attn.Wo")) += lc.attn_concat.transpose() * dx2;
        L.view(grad, lname(l, "attn.bo")).row(0) += dx2.colwise().sum();

        MatrixD dq_ = MatrixD::Zero(N, D), dk_ = MatrixD::Zero(N, D), dv_ = MatrixD::Zero(N, D);
        for (int h = 0; h < H; ++h) {
            const auto& A = lc.attn[std::size_t(h)];
            const MatrixD dOh = dconcat.middleCols(h * dh, dh);
            const MatrixD Vh = lc.v.middleCols(h * dh, dh);
            MatrixD dA = dOh * Vh.transpose();
            dv_.middleCols(h * dh, dh) = A.transpose() * dOh;
            // softmax backward per row
            MatrixD dS(N, N);
            for (Eigen::Index i = 0; i < N; ++i) {
                const double dot = dA.row(i).dot(A.row(i));
                dS.row(i) = (A.row(i).array() * (dA.row(i).array() - dot)).matrix();
            }
            dq_.middleCols(h * dh, dh) = scale * dS * lc.k.middleCols(h * dh, dh);
            dk_.middleCols(h * dh, dh) = scale * dS.transpose() * lc.q.middleCols(h * dh, dh);
        }
        const MatrixD h1qk = c.pe.size() > 0 ? MatrixD(lc.h1 + c.pe) : lc.h1;
        L.view(grad, lname(l, "attn.Wq")) += h1qk.transpose() * dq_;
        L.view(grad, lname(l, "attn.bq")).row(0) += dq_.colwise().sum();
        L.view(grad, lname(l, "attn.Wk")) += h1qk.transpose() * dk_;
        L.view(grad, lname(l, "attn.bk")).row(0) += dk_.colwise().sum();
        L.view(grad, lname(l, "attn.Wv")) += lc.h1.transpose() * dv_;
        L.view(grad, lname(l, "attn.bv")).row(0) += dv_.colwise().sum();
        MatrixD dh1 = dq_ * params.tensor(lname(l, "attn.Wq")).transpose() +
                      dk_ * params.tensor(lname(l, "attn.Wk")).transpose() +
                      dv_ * params.tensor(lname(l, "attn.Wv")).transpose();
        dx = dx2 + layer_norm_backward(dh1, lc.x, lc.ln1_mu, lc.ln1_inv, params.tensor(lname(l, "ln1.g")),
                                       L.view(grad, lname(l, "ln1.g")), L.view(grad, lname(l, "ln1.b")));
    }
    // input projection; positional encoding is constant w.r.t. parameters
    L.view(grad, "input.W") += c.input.transpose() * dx;
    L.view(grad, "input.b").row(0) += dx.colwise().sum();
}

}  // namespace steps
