#include "steps/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <sstream>

#include "steps/errors.hpp"

namespace steps {

void TrainConfig::validate() const {
    if (num_chunks < 2) throw ConfigError("num_chunks must be >= 2");
    if (!(temporal_extent > 0.0 && temporal_extent <= 1.0)) throw ConfigError("temporal_extent in (0,1]");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
    if (epochs < 0) throw ConfigError("epochs must be >= 0");
    if (lr_drop_epoch && *lr_drop_epoch < 1) throw ConfigError("lr_drop_epoch must be >= 1");
    encoder.validate();
}

std::vector<int> sample_chunks(int num_frames, int num_chunks, double beta, Rng& rng) {
    if (num_frames < 2) throw DataError("sample_chunks: need at least 2 frames");
    if (num_chunks < 1) throw ConfigError("sample_chunks: num_chunks must be >= 1");
    if (!(beta > 0.0 && beta <= 1.0)) throw ConfigError("sample_chunks: beta in (0,1]");

    int extent = std::max(1, int(std::lround(beta * num_frames)));
    extent = std::min(extent, num_frames);
    const int n = std::min(num_chunks, extent);  // clamp when the extent is too short

    int t_start = 0;
    if (extent < num_frames) {
        std::uniform_int_distribution<int> start(0, num_frames - extent);
        t_start = start(rng);
    }
    std::vector<int> out;
    out.reserve(std::size_t(n));
    for (int k = 0; k < n; ++k) {
        const int lo = t_start + int(std::floor(double(k) * extent / n));
        const int hi = t_start + int(std::floor(double(k + 1) * extent / n)) - 1;
        if (hi < lo) {
            out.push_back(lo);
            continue;
        }
        std::uniform_int_distribution<int> pick(lo, hi);
        out.push_back(pick(rng));
    }
    return out;
}

VideoSample sample_video(const VideoRecord& rec, const std::vector<std::string>& modality_names, int num_chunks,
                         double beta, Rng& rng) {
    const int T = int(rec.frame_count());
    std::vector<int> idx = sample_chunks(T, num_chunks, beta, rng);
    const int n = int(idx.size());

    VideoSample s;
    s.valid.assign(std::size_t(num_chunks), true);
    if (n < num_chunks) {
        // short video: pad by repeating the last index, masked out of the loss
        for (int k = n; k < num_chunks; ++k) {
            idx.push_back(idx.back());
            s.valid[std::size_t(k)] = false;
        }
    }

    const auto& first = rec.modalities.at(modality_names.front());
    s.fps = first.fps;
    s.timestamps.resize(num_chunks);
    s.positions.resize(num_chunks);
    for (int k = 0; k < num_chunks; ++k) {
        s.timestamps[k] = first.timestamps[idx[std::size_t(k)]];
        s.positions[k] = double(k) / double(num_chunks);
    }
    for (const auto& name : modality_names) {
        const auto& seq = rec.modalities.at(name);
        MatrixD raw(num_chunks, seq.dim());
        for (int k = 0; k < num_chunks; ++k) raw.row(k) = seq.data.row(idx[std::size_t(k)]).cast<double>();
        s.raw.push_back(std::move(raw));
    }
    return s;
}

double video_loss(const VideoSample& sample, const EncoderParams& params, const LossConfig& loss_cfg,
                  std::vector<VectorD>* grads) {
    const int M = int(sample.raw.size());
    std::vector<MatrixD> Q(static_cast<std::size_t>(M));
    std::vector<EncodeCache> ecaches(static_cast<std::size_t>(M));
    std::vector<ProjectCache> pcaches(static_cast<std::size_t>(M));
    for (int m = 0; m < M; ++m) {
        const auto& p = params.modalities[std::size_t(m)];
        MatrixD qtilde = encode(sample.raw[std::size_t(m)], sample.timestamps, sample.fps, p,
                                grads ? &ecaches[std::size_t(m)] : nullptr);
        Q[std::size_t(m)] = project(qtilde, p, grads ? &pcaches[std::size_t(m)] : nullptr);
    }
    const MatrixD boot = gather_bootstrap_features(sample.raw, params.modality_names, loss_cfg);
    const bool all_valid = std::all_of(sample.valid.begin(), sample.valid.end(), [](bool b) { return b; });
    Bmc2Result res = bmc2_loss(Q, boot, sample.timestamps, sample.positions, loss_cfg, grads != nullptr,
                               all_valid ? nullptr : &sample.valid);
    if (grads) {
        for (int m = 0; m < M; ++m) {
            const auto& p = params.modalities[std::size_t(m)];
            MatrixD dqtilde = project_backward(res.grad_q[std::size_t(m)], pcaches[std::size_t(m)], p,
                                               (*grads)[std::size_t(m)]);
            encode_backward(dqtilde, ecaches[std::size_t(m)], p, (*grads)[std::size_t(m)]);
        }
    }
    return res.loss;
}

EncoderParams init_params(const Manifest& manifest, const TrainConfig& cfg) {
    EncoderParams params;
    params.modality_names = manifest.modality_names;
    for (std::size_t m = 0; m < manifest.modality_names.size(); ++m) {
        const auto& seq = manifest.records.front().modalities.at(manifest.modality_names[m]);
        ModalityParams mp(cfg.encoder, int(seq.dim()));
        Rng rng(derive_seed(cfg.seed, 0xE0C0DE + m));
        mp.init(rng);
        params.modalities.push_back(std::move(mp));
    }
    return params;
}

TrainResult train(const Manifest& manifest, const TrainConfig& cfg, const TrainResult* resume) {
    cfg.validate();
    if (manifest.records.empty()) throw DataError("train: empty manifest");
    {
        auto violations = validate_manifest(manifest);
        if (!violations.empty()) throw DataError("train: invalid manifest: " + violations.front());
    }
    const int M = int(manifest.modality_names.size());
    const int V = int(manifest.records.size());

    TrainResult out;
    int start_epoch = 0;
    if (resume) {
        out = *resume;
        start_epoch = out.epochs_done;
    } else {
        out.params = init_params(manifest, cfg);
        out.adam.m.resize(static_cast<std::size_t>(M));
        out.adam.v.resize(static_cast<std::size_t>(M));
        for (int m = 0; m < M; ++m) {
            out.adam.m[std::size_t(m)] = VectorD::Zero(out.params.modalities[std::size_t(m)].flat.size());
            out.adam.v[std::size_t(m)] = VectorD::Zero(out.params.modalities[std::size_t(m)].flat.size());
        }
    }

    constexpr double b1 = 0.9, b2 = 0.999, adam_eps = 1e-8;
    for (int epoch = start_epoch; epoch < cfg.epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        Rng rng(derive_seed(cfg.seed, 0x5EED0000ull + std::uint64_t(epoch)));
        std::vector<int> order(static_cast<std::size_t>(V));
        std::iota(order.begin(), order.end(), 0);
        std::shuffle(order.begin(), order.end(), rng);

        double lr = cfg.learning_rate;
        if (cfg.lr_drop_epoch && epoch + 1 >= *cfg.lr_drop_epoch) lr *= 0.1;

        double epoch_loss_sum = 0.0;
        int batch_count = 0;
        for (int b0 = 0; b0 < V; b0 += cfg.batch_size) {
            const int bn = std::min(cfg.batch_size, V - b0);
            std::vector<VectorD> grads(static_cast<std::size_t>(M));
            for (int m = 0; m < M; ++m)
                grads[std::size_t(m)] = VectorD::Zero(out.params.modalities[std::size_t(m)].flat.size());
            double batch_loss = 0.0;
            for (int i = 0; i < bn; ++i) {
                const auto& rec = manifest.records[std::size_t(order[std::size_t(b0 + i)])];
                VideoSample sample =
                    sample_video(rec, manifest.modality_names, cfg.num_chunks, cfg.temporal_extent, rng);
                batch_loss += video_loss(sample, out.params, cfg.loss, &grads);
            }
            batch_loss /= bn;
            for (auto& g : grads) g /= double(bn);
            if (!std::isfinite(batch_loss)) {
                std::ostringstream os;
                os << "non-finite loss at epoch " << epoch << ", batch " << batch_count;
                throw NumericError(os.str());
            }

            out.adam.step += 1;
            const double bc1 = 1.0 - std::pow(b1, double(out.adam.step));
            const double bc2 = 1.0 - std::pow(b2, double(out.adam.step));
            for (int m = 0; m < M; ++m) {
                auto& mm = out.adam.m[std::size_t(m)];
                auto& vv = out.adam.v[std::size_t(m)];
                const auto& g = grads[std::size_t(m)];
                mm = b1 * mm + (1.0 - b1) * g;
                vv = b2 * vv + (1.0 - b2) * g.cwiseProduct(g);
                out.params.modalities[std::size_t(m)].flat.array() -=
                    lr * (mm.array() / bc1) / ((vv.array() / bc2).sqrt() + adam_eps);
            }
            epoch_loss_sum += batch_loss;
            ++batch_count;
        }
        out.history.epoch_loss.push_back(epoch_loss_sum / std::max(1, batch_count));
        out.history.epoch_seconds.push_back(
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
        out.epochs_done = epoch + 1;
    }
    return out;
}

double gradient_check(const Manifest& manifest, const TrainConfig& cfg, int num_directions, double eps) {
    cfg.validate();
    if (manifest.records.empty()) throw DataError("gradient_check: empty manifest");
    EncoderParams params = init_params(manifest, cfg);
    const int M = int(manifest.modality_names.size());

    Rng rng(derive_seed(cfg.seed, 0xF1D0));
    VideoSample sample = sample_video(manifest.records.front(), manifest.modality_names, cfg.num_chunks,
                                      cfg.temporal_extent, rng);

    std::vector<VectorD> grads(static_cast<std::size_t>(M));
    for (int m = 0; m < M; ++m) grads[std::size_t(m)] = VectorD::Zero(params.modalities[std::size_t(m)].flat.size());
    video_loss(sample, params, cfg.loss, &grads);

    auto loss_at = [&](const std::vector<VectorD>& flats) {
        EncoderParams p = params;
        for (int m = 0; m < M; ++m) p.modalities[std::size_t(m)].flat = flats[std::size_t(m)];
        return video_loss(sample, p, cfg.loss, nullptr);
    };

    std::normal_distribution<double> gauss(0.0, 1.0);
    double max_rel = 0.0;
    for (int k = 0; k < num_directions; ++k) {
        std::vector<VectorD> dir, plus, minus;
        dir.resize(static_cast<std::size_t>(M));
        plus.resize(static_cast<std::size_t>(M));
        minus.resize(static_cast<std::size_t>(M));
        double norm2 = 0.0;
        for (int m = 0; m < M; ++m) {
            dir[std::size_t(m)].resize(params.modalities[std::size_t(m)].flat.size());
            for (Eigen::Index i = 0; i < dir[std::size_t(m)].size(); ++i) dir[std::size_t(m)][i] = gauss(rng);
            norm2 += dir[std::size_t(m)].squaredNorm();
        }
        const double inv_norm = 1.0 / std::sqrt(norm2);
        double analytic = 0.0;
        for (int m = 0; m < M; ++m) {
            dir[std::size_t(m)] *= inv_norm;
            analytic += grads[std::size_t(m)].dot(dir[std::size_t(m)]);
            plus[std::size_t(m)] = params.modalities[std::size_t(m)].flat + eps * dir[std::size_t(m)];
            minus[std::size_t(m)] = params.modalities[std::size_t(m)].flat - eps * dir[std::size_t(m)];
        }
        const double numeric = (loss_at(plus) - loss_at(minus)) / (2.0 * eps);
        const double rel = std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-8});
        max_rel = std::max(max_rel, rel);
    }
    return max_rel;
}

}  // namespace steps
