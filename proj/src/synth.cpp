#include "steps/synth.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <numeric>

#include "steps/errors.hpp"
#include "steps/rng.hpp"

namespace steps {

namespace {

// Largest-remainder rounding of weights to integers summing to total,
// each at least min_each.
std::vector<int> apportion(const std::vector<double>& weights, int total, int min_each) {
    const int n = int(weights.size());
    const double wsum = std::accumulate(weights.begin(), weights.end(), 0.0);
    std::vector<int> out(n, min_each);
    const int budget = total - min_each * n;
    if (budget < 0) throw ConfigError("not enough frames to satisfy minimum segment lengths");
    std::vector<double> frac(n);
    int remaining = budget;
    for (int i = 0; i < n; ++i) {
        const double share = budget * weights[i] / wsum;
        const int whole = int(std::floor(share));
        out[i] += whole;
        frac[i] = share - whole;
        remaining -= whole;
    }
    std::vector<int> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) { return frac[a] > frac[b]; });
    for (int i = 0; i < remaining; ++i) out[idx[i]] += 1;
    return out;
}

}  // namespace

void SynthConfig::validate() const {
    if (num_videos < 1) throw ConfigError("num_videos must be >= 1");
    if (num_steps < 2) throw ConfigError("num_steps must be >= 2");
    if (frames_per_video < 10 * num_steps) throw ConfigError("frames_per_video must be >= 10 * num_steps");
    if (dims.empty()) throw ConfigError("at least one modality required");
    for (int d : dims)
        if (d < 2) throw ConfigError("modality dims must be >= 2");
    if (background_fraction < 0.0 || background_fraction >= 1.0) throw ConfigError("background_fraction in [0,1)");
    if (repeat_probability < 0.0 || repeat_probability > 1.0) throw ConfigError("repeat_probability in [0,1]");
    if (cue_noise < 0.0) throw ConfigError("cue_noise must be >= 0");
    if (!(fps > 0.0)) throw ConfigError("fps must be positive");
}

std::pair<Manifest, SynthGroundTruth> generate(const SynthConfig& config) {
    config.validate();
    const int K = config.num_steps;
    const int M = config.num_modalities();
    const int T = config.frames_per_video;

    SynthGroundTruth gt;
    gt.prototypes.resize(M);
    for (int m = 0; m < M; ++m) {
        Rng rng(derive_seed(config.seed, 1'000'000 + std::uint64_t(m)));
        std::normal_distribution<double> gauss(0.0, 1.0);
        MatrixF proto(K + 1, config.dims[m]);
        for (int k = 0; k <= K; ++k) {
            Eigen::VectorXd row(config.dims[m]);
            for (int d = 0; d < config.dims[m]; ++d) row[d] = gauss(rng);
            row /= row.norm();
            proto.row(k) = row.cast<float>();
        }
        gt.prototypes[m] = std::move(proto);
    }

    Manifest manifest;
    for (int m = 0; m < M; ++m) manifest.modality_names.push_back("m" + std::to_string(m));

    for (int v = 0; v < config.num_videos; ++v) {
        Rng rng(derive_seed(config.seed, std::uint64_t(v)));

        // Mild permutation of the canonical step order: random adjacent swaps.
        std::vector<int> order(K);
        std::iota(order.begin(), order.end(), 0);
        std::bernoulli_distribution swap_coin(0.3);
        for (int i = 0; i + 1 < K; ++i)
            if (swap_coin(rng)) std::swap(order[i], order[i + 1]);

        // Repeats: a repeated step recurs in a temporally distant segment.
        // Appending after the full pass (or prepending for the last step)
        // guarantees at least one other step between the two occurrences.
        std::bernoulli_distribution repeat_coin(config.repeat_probability);
        std::deque<int> segs(order.begin(), order.end());
        for (int i = 0; i < K; ++i) {
            if (config.repeat_probability > 0.0 && repeat_coin(rng)) {
                if (i == K - 1)
                    segs.push_front(order[i]);
                else
                    segs.push_back(order[i]);
            }
        }
        const int nseg = int(segs.size());

        const int bg_frames = int(std::lround(config.background_fraction * T));
        const int step_frames = T - bg_frames;

        std::uniform_real_distribution<double> seg_len(0.5, 1.5);
        std::vector<double> w(nseg);
        for (auto& x : w) x = seg_len(rng);
        const std::vector<int> seg_sizes = apportion(w, step_frames, 1);

        std::vector<int> gap_sizes(nseg + 1, 0);
        if (bg_frames > 0) {
            std::uniform_real_distribution<double> uni(0.0, 1.0);
            std::vector<double> gw(nseg + 1);
            for (auto& x : gw) x = uni(rng);
            gap_sizes = apportion(gw, bg_frames, 0);
        }

        VectorI step_labels(T), phase_labels(T);
        int t = 0;
        for (int s = 0; s <= nseg; ++s) {
            for (int g = 0; g < gap_sizes[s]; ++g, ++t) {
                step_labels[t] = -1;
                phase_labels[t] = K;
            }
            if (s < nseg) {
                for (int g = 0; g < seg_sizes[s]; ++g, ++t) {
                    step_labels[t] = segs[s];
                    phase_labels[t] = segs[s];
                }
            }
        }

        VideoRecord rec;
        rec.video_id = "video" + std::to_string(v);
        rec.step_labels = step_labels;
        rec.phase_labels = phase_labels;
        for (int m = 0; m < M; ++m) {
            Rng frng(derive_seed(config.seed, (std::uint64_t(v) << 20) + std::uint64_t(m) + 7));
            std::normal_distribution<double> gauss(0.0, 1.0);
            FeatureSequence seq;
            seq.modality_name = manifest.modality_names[m];
            seq.fps = config.fps;
            seq.data.resize(T, config.dims[m]);
            for (int f = 0; f < T; ++f) {
                const int proto_row = step_labels[f] < 0 ? K : step_labels[f];
                for (int d = 0; d < config.dims[m]; ++d) {
                    const double noise = config.cue_noise > 0.0 ? config.cue_noise * gauss(frng) : 0.0;
                    seq.data(f, d) = float(double(gt.prototypes[m](proto_row, d)) + noise);
                }
            }
            seq.default_timestamps();
            rec.modalities.emplace(seq.modality_name, std::move(seq));
        }
        manifest.records.push_back(std::move(rec));
        gt.step_labels.push_back(std::move(step_labels));
        gt.phase_labels.push_back(std::move(phase_labels));
    }
    return {std::move(manifest), std::move(gt)};
}

double separability_report(const Manifest& manifest, const SynthGroundTruth& gt) {
    const int M = int(gt.prototypes.size());
    const int Kp1 = int(gt.prototypes[0].rows());
    long correct = 0, total = 0;
    for (std::size_t v = 0; v < manifest.records.size(); ++v) {
        const auto& rec = manifest.records[v];
        const auto& labels = gt.step_labels[v];
        const Eigen::Index T = rec.frame_count();
        for (Eigen::Index t = 0; t < T; ++t) {
            int best = 0;
            double best_d = std::numeric_limits<double>::infinity();
            for (int k = 0; k < Kp1; ++k) {
                double d2 = 0.0;
                for (int m = 0; m < M; ++m) {
                    const auto& seq = rec.modalities.at(manifest.modality_names[std::size_t(m)]);
                    d2 += (seq.data.row(t).cast<double>() - gt.prototypes[m].row(k).cast<double>()).squaredNorm();
                }
                if (d2 < best_d) {
                    best_d = d2;
                    best = k;
                }
            }
            const int truth = labels[t] < 0 ? Kp1 - 1 : labels[t];
            correct += (best == truth);
            ++total;
        }
    }
    return total ? double(correct) / double(total) : 0.0;
}

}  // namespace steps
