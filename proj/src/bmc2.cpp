#include "steps/bmc2.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <json.hpp>

#include "steps/errors.hpp"

namespace steps {

void LossConfig::validate(int num_modalities) const {
    if (!(sigma > 0.0)) throw ConfigError("sigma must be positive");
    if (!(margin > 0.0)) throw ConfigError("margin must be positive");
    if (negative_cap < 0) throw ConfigError("negative_cap must be >= 0");
    if (lambda.size() != 0) {
        if (lambda.rows() != num_modalities || lambda.cols() != num_modalities)
            throw ConfigError("lambda must be M x M");
        for (int u = 0; u < num_modalities; ++u)
            if (lambda(u, u) != 1.0) throw ConfigError("lambda_uu must be 1 for all u");
        if ((lambda.array() < 0.0).any()) throw ConfigError("lambda entries must be >= 0");
    }
}

MatrixD LossConfig::resolved_lambda(int num_modalities) const {
    if (lambda.size() != 0) return lambda;
    if (num_modalities <= 2) return MatrixD::Ones(num_modalities, num_modalities);
    MatrixD l = MatrixD::Zero(num_modalities, num_modalities);
    l.diagonal().setOnes();
    l.row(0).setOnes();  // appearance modality drives the cross terms
    return l;
}

BoolMatrix sigma_window(const VectorD& timestamps, double sigma) {
    const auto N = timestamps.size();
    BoolMatrix W(N, N);
    for (Eigen::Index i = 0; i < N; ++i)
        for (Eigen::Index j = 0; j < N; ++j)
            W(i, j) = std::abs(timestamps[i] - timestamps[j]) <= sigma ? 1 : 0;
    return W;
}

BootstrapRow bootstrap_window(const MatrixD& raw, const BoolMatrix& W, int anchor, bool delta_include_anchor) {
    const auto N = raw.rows();
    BootstrapRow out;
    VectorD dist(N);
    for (Eigen::Index j = 0; j < N; ++j) dist[j] = (raw.row(anchor) - raw.row(j)).norm();
    double sum = 0.0;
    long count = 0;
    for (Eigen::Index j = 0; j < N; ++j) {
        if (!W(anchor, j)) continue;
        if (!delta_include_anchor && j == anchor) continue;
        sum += dist[j];
        ++count;
    }
    out.delta = count ? sum / double(count) : 0.0;
    out.w_prime.resize(N);
    out.w_tilde.resize(N);
    for (Eigen::Index j = 0; j < N; ++j) {
        out.w_prime[j] = dist[j] <= out.delta ? 1 : 0;
        out.w_tilde[j] = (out.w_prime[j] || W(anchor, j)) ? 1 : 0;
    }
    return out;
}

double cidm_pair_loss(const VectorD& q_a, const VectorD& q_j, double t_a, double t_j, int w, double zeta) {
    const double d = (q_a - q_j).norm();
    const double gamma = (t_a - t_j) * (t_a - t_j) + 1.0;
    return w ? d / gamma : gamma * std::max(0.0, zeta - d);
}

std::string WindowSet::to_json() const {
    nlohmann::json j;
    j["anchors"] = anchors;
    auto dump = [](const BoolMatrix& m) {
        std::vector<std::vector<int>> rows;
        for (Eigen::Index i = 0; i < m.rows(); ++i) {
            std::vector<int> r(std::size_t(m.cols()));
            for (Eigen::Index c = 0; c < m.cols(); ++c) r[std::size_t(c)] = m(i, c);
            rows.push_back(std::move(r));
        }
        return rows;
    };
    j["W"] = dump(W);
    j["W_prime"] = dump(W_prime);
    j["W_tilde"] = dump(W_tilde);
    j["delta"] = std::vector<double>(delta.data(), delta.data() + delta.size());
    return j.dump(2);
}

namespace {

// per-pair role in the loss
enum class PairRole : std::uint8_t { skip = 0, positive = 1, negative = 2 };

}  // namespace

Bmc2Result bmc2_loss(const std::vector<MatrixD>& Q, const MatrixD& raw_bootstrap, const VectorD& timestamps,
                     const VectorD& positions, const LossConfig& cfg, bool with_grad,
                     const std::vector<bool>* valid) {
    const int M = int(Q.size());
    if (M < 1) throw ConfigError("bmc2_loss: no modalities");
    cfg.validate(M);
    const auto N = Q[0].rows();
    for (const auto& q : Q)
        if (q.rows() != N) throw ConfigError("bmc2_loss: modalities disagree on N");
    if (timestamps.size() != N || positions.size() != N) throw ConfigError("bmc2_loss: time vector length mismatch");
    const MatrixD lambda = cfg.resolved_lambda(M);

    Bmc2Result res;
    auto& ws = res.windows;
    ws.W = sigma_window(timestamps, cfg.sigma);
    ws.W_prime = BoolMatrix::Zero(N, N);
    ws.W_tilde = ws.W;
    ws.delta = VectorD::Zero(N);

    const bool bootstrapped = cfg.bootstrap_enabled && cfg.bootstrap_variant != BootstrapVariant::none;
    std::vector<bool> anchor_ok(std::size_t(N), true);
    if (valid) {
        if (valid->size() != std::size_t(N)) throw ConfigError("bmc2_loss: valid mask length mismatch");
        anchor_ok = *valid;
    }
    for (Eigen::Index a = 0; a < N; ++a) {
        if (!anchor_ok[std::size_t(a)]) continue;
        ws.anchors.push_back(int(a));
        if (bootstrapped) {
            if (raw_bootstrap.rows() != N) throw ConfigError("bmc2_loss: bootstrap features length mismatch");
            auto row = bootstrap_window(raw_bootstrap, ws.W, int(a), cfg.delta_include_anchor);
            ws.delta[a] = row.delta;
            ws.W_prime.row(a) = row.w_prime.transpose();
            ws.W_tilde.row(a) = row.w_tilde.transpose();
        }
    }

    // role of each (a, j) pair, shared across modality pairs
    Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic> role(N, N);
    role.setConstant(std::uint8_t(PairRole::skip));
    for (Eigen::Index a = 0; a < N; ++a) {
        if (!anchor_ok[std::size_t(a)]) continue;
        for (Eigen::Index j = 0; j < N; ++j) {
            if (j == a || !anchor_ok[std::size_t(j)]) continue;
            const bool in_w = ws.W(a, j) != 0;
            const bool in_wt = ws.W_tilde(a, j) != 0;
            const bool in_wp = ws.W_prime(a, j) != 0;
            PairRole r = PairRole::skip;
            if (!bootstrapped) {
                r = in_w ? PairRole::positive : PairRole::negative;
            } else {
                switch (cfg.bootstrap_variant) {
                    case BootstrapVariant::union_pos_neg:
                        r = in_wt ? PairRole::positive : PairRole::negative;
                        break;
                    case BootstrapVariant::union_neg_only:
                        r = in_w ? PairRole::positive : (in_wt ? PairRole::skip : PairRole::negative);
                        break;
                    case BootstrapVariant::sampled_only:
                        r = in_wp ? PairRole::positive : PairRole::negative;
                        break;
                    case BootstrapVariant::none:
                        r = in_w ? PairRole::positive : PairRole::negative;
                        break;
                }
            }
            role(a, j) = std::uint8_t(r);
        }
        if (cfg.negative_cap > 0) {
            // keep only the temporally nearest negatives for this anchor
            std::vector<Eigen::Index> negs;
            for (Eigen::Index j = 0; j < N; ++j)
                if (role(a, j) == std::uint8_t(PairRole::negative)) negs.push_back(j);
            if (long(negs.size()) > cfg.negative_cap) {
                std::stable_sort(negs.begin(), negs.end(), [&](Eigen::Index x, Eigen::Index y) {
                    return std::abs(positions[x] - positions[a]) < std::abs(positions[y] - positions[a]);
                });
                for (std::size_t i = std::size_t(cfg.negative_cap); i < negs.size(); ++i)
                    role(a, negs[i]) = std::uint8_t(PairRole::skip);
            }
        }
    }

    MatrixD gamma(N, N);
    for (Eigen::Index a = 0; a < N; ++a)
        for (Eigen::Index j = 0; j < N; ++j) {
            const double dt = positions[a] - positions[j];
            gamma(a, j) = dt * dt + 1.0;
        }

    long contributing_pairs = 0;
    for (Eigen::Index a = 0; a < N; ++a)
        for (Eigen::Index j = 0; j < N; ++j)
            if (role(a, j) != std::uint8_t(PairRole::skip)) ++contributing_pairs;
    long contributing = 0;
    for (int u = 0; u < M; ++u)
        for (int v = 0; v < M; ++v)
            if (lambda(u, v) != 0.0) contributing += contributing_pairs;
    const double inv_count =
        cfg.reduction == LossReduction::mean_over_pairs && contributing > 0 ? 1.0 / double(contributing) : 1.0;

    if (with_grad) {
        res.grad_q.assign(std::size_t(M), MatrixD());
        for (int u = 0; u < M; ++u) res.grad_q[std::size_t(u)] = MatrixD::Zero(N, Q[std::size_t(u)].cols());
    }

    double loss = 0.0;
    for (int u = 0; u < M; ++u) {
        for (int v = 0; v < M; ++v) {
            const double lam = lambda(u, v);
            if (lam == 0.0) continue;
            const auto& Qu = Q[std::size_t(u)];
            const auto& Qv = Q[std::size_t(v)];
            MatrixD d2 = (-2.0 * Qu * Qv.transpose());
            d2.colwise() += Qu.rowwise().squaredNorm();
            d2.rowwise() += Qv.rowwise().squaredNorm().transpose();
            const MatrixD dist = d2.cwiseMax(0.0).cwiseSqrt();

            MatrixD coef;  // d(loss)/d(dist) per pair, including lambda and reduction
            if (with_grad) coef = MatrixD::Zero(N, N);
            for (Eigen::Index a = 0; a < N; ++a) {
                for (Eigen::Index j = 0; j < N; ++j) {
                    const auto r = role(a, j);
                    if (r == std::uint8_t(PairRole::skip)) continue;
                    const double g = gamma(a, j);
                    const double d = dist(a, j);
                    if (r == std::uint8_t(PairRole::positive)) {
                        loss += lam * inv_count * d / g;
                        if (with_grad) coef(a, j) = lam * inv_count / g;
                    } else {
                        const double hinge = cfg.margin - d;
                        if (hinge > 0.0) {
                            loss += lam * inv_count * g * hinge;
                            if (with_grad) coef(a, j) = -lam * inv_count * g;
                        }
                    }
                }
            }
            if (with_grad) {
                // dL/dQu[a] += sum_j E(a,j) (Qu[a]-Qv[j]), E = coef / dist
                MatrixD E = coef;
                for (Eigen::Index a = 0; a < N; ++a)
                    for (Eigen::Index j = 0; j < N; ++j) E(a, j) = dist(a, j) > 0.0 ? E(a, j) / dist(a, j) : 0.0;
                res.grad_q[std::size_t(u)] += E.rowwise().sum().asDiagonal() * Qu - E * Qv;
                res.grad_q[std::size_t(v)] += E.colwise().sum().asDiagonal() * Qv - E.transpose() * Qu;
            }
        }
    }
    res.loss = loss;
    return res;
}

MatrixD gather_bootstrap_features(const std::vector<MatrixD>& raw_per_modality,
                                  const std::vector<std::string>& modality_names, const LossConfig& cfg) {
    if (raw_per_modality.empty()) throw ConfigError("no raw features to bootstrap from");
    if (cfg.bootstrap_modality.empty()) return raw_per_modality.front();
    if (cfg.bootstrap_modality == "concat") {
        Eigen::Index cols = 0;
        for (const auto& m : raw_per_modality) cols += m.cols();
        MatrixD out(raw_per_modality.front().rows(), cols);
        Eigen::Index off = 0;
        for (const auto& m : raw_per_modality) {
            out.middleCols(off, m.cols()) = m;
            off += m.cols();
        }
        return out;
    }
    for (std::size_t i = 0; i < modality_names.size(); ++i)
        if (modality_names[i] == cfg.bootstrap_modality) return raw_per_modality[i];
    throw ConfigError("unknown bootstrap modality: " + cfg.bootstrap_modality);
}

}  // namespace steps
