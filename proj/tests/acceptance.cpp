// Acceptance gate: one binary, one pass/fail line per criterion.
// Exits nonzero if any criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "steps/bmc2.hpp"
#include "steps/encoder.hpp"
#include "steps/eval.hpp"
#include "steps/keysteps.hpp"
#include "steps/rng.hpp"
#include "steps/synth.hpp"
#include "steps/trainer.hpp"

using namespace steps;
namespace fs = std::filesystem;

namespace {

struct Criterion {
    int id;
    std::string name;
    bool pass = false;
    double seconds = 0.0;
    std::string detail;
};

double now_minus(const std::chrono::steady_clock::time_point& t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// ---------------------------------------------------------------------------
// Reference loss: literal quadruple loop over modality pairs and frame pairs.
double reference_loss(const std::vector<MatrixD>& Q, const MatrixD& raw, const VectorD& ts,
                      const VectorD& pos, const LossConfig& cfg) {
    const int M = int(Q.size());
    const int N = int(Q[0].rows());
    const MatrixD lambda = cfg.resolved_lambda(M);
    const bool boot = cfg.bootstrap_enabled && cfg.bootstrap_variant != BootstrapVariant::none;

    // roles: 0 skip, 1 positive, 2 negative
    std::vector<std::vector<int>> role(std::size_t(N), std::vector<int>(std::size_t(N), 0));
    for (int a = 0; a < N; ++a) {
        std::vector<int> w(static_cast<std::size_t>(N));
        double delta = 0.0;
        int count = 0;
        for (int j = 0; j < N; ++j) {
            w[std::size_t(j)] = std::abs(ts[a] - ts[j]) <= cfg.sigma ? 1 : 0;
            if (w[std::size_t(j)] && (cfg.delta_include_anchor || j != a)) {
                delta += (raw.row(a) - raw.row(j)).norm();
                ++count;
            }
        }
        if (count) delta /= count;
        for (int j = 0; j < N; ++j) {
            if (j == a) continue;
            const int wp = (raw.row(a) - raw.row(j)).norm() <= delta ? 1 : 0;
            const int wu = (w[std::size_t(j)] || wp) ? 1 : 0;
            int r;
            if (!boot) {
                r = w[std::size_t(j)] ? 1 : 2;
            } else if (cfg.bootstrap_variant == BootstrapVariant::union_pos_neg) {
                r = wu ? 1 : 2;
            } else if (cfg.bootstrap_variant == BootstrapVariant::union_neg_only) {
                r = w[std::size_t(j)] ? 1 : (wu ? 0 : 2);
            } else {  // sampled_only
                r = wp ? 1 : 2;
            }
            role[std::size_t(a)][std::size_t(j)] = r;
        }
    }

    long tuples = 0;
    double loss = 0.0;
    for (int u = 0; u < M; ++u) {
        for (int v = 0; v < M; ++v) {
            if (lambda(u, v) == 0.0) continue;
            for (int a = 0; a < N; ++a) {
                for (int j = 0; j < N; ++j) {
                    const int r = role[std::size_t(a)][std::size_t(j)];
                    if (r == 0) continue;
                    ++tuples;
                    const double d = (Q[std::size_t(u)].row(a) - Q[std::size_t(v)].row(j)).norm();
                    const double gamma = (pos[a] - pos[j]) * (pos[a] - pos[j]) + 1.0;
                    loss += lambda(u, v) * (r == 1 ? d / gamma : gamma * std::max(0.0, cfg.margin - d));
                }
            }
        }
    }
    if (cfg.reduction == LossReduction::mean_over_pairs && tuples > 0) loss /= double(tuples);
    return loss;
}

MatrixD unit_rows(int n, int d, Rng& rng) {
    std::normal_distribution<double> g(0.0, 1.0);
    MatrixD m(n, d);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < d; ++j) m(i, j) = g(rng);
        m.row(i) /= m.row(i).norm();
    }
    return m;
}

// ---------------------------------------------------------------------------
Criterion criterion_loss_oracle() {
    Criterion c{1, "vectorized loss matches the pairwise reference"};
    const auto t0 = std::chrono::steady_clock::now();
    const int N = 64, M = 2, D = 32;
    const BootstrapVariant variants[4] = {BootstrapVariant::union_pos_neg, BootstrapVariant::union_neg_only,
                                          BootstrapVariant::sampled_only, BootstrapVariant::none};
    Rng rng(2024);
    std::normal_distribution<double> g(0.0, 1.0);
    std::uniform_real_distribution<double> sig(1.0, 8.0);
    std::uniform_real_distribution<double> dt(0.1, 1.5);
    double max_rel = 0.0;
    for (int rep = 0; rep < 50; ++rep) {
        std::vector<MatrixD> Q;
        for (int m = 0; m < M; ++m) Q.push_back(unit_rows(N, D, rng));
        MatrixD raw(N, 16);
        for (int i = 0; i < N; ++i)
            for (int j = 0; j < 16; ++j) raw(i, j) = g(rng);
        VectorD ts(N), pos(N);
        double t = 0.0;
        for (int i = 0; i < N; ++i) {
            t += dt(rng);
            ts[i] = t;
            pos[i] = double(i) / double(N);
        }
        LossConfig cfg;
        cfg.sigma = sig(rng);
        cfg.bootstrap_variant = variants[rep % 4];
        const double fast = bmc2_loss(Q, raw, ts, pos, cfg).loss;
        const double slow = reference_loss(Q, raw, ts, pos, cfg);
        max_rel = std::max(max_rel, std::abs(fast - slow) / std::max(1.0, std::abs(slow)));
    }
    c.seconds = now_minus(t0);
    c.pass = max_rel <= 1e-6 && c.seconds < 30.0;
    std::ostringstream os;
    os << "50 instances N=64 M=2 D=32, max rel err " << max_rel;
    c.detail = os.str();
    return c;
}

Criterion criterion_gradients() {
    Criterion c{2, "analytic gradients match finite differences"};
    const auto t0 = std::chrono::steady_clock::now();
    SynthConfig sc;
    sc.num_videos = 1;
    sc.num_steps = 5;
    sc.frames_per_video = 100;
    sc.dims = {12, 8};
    sc.cue_noise = 0.2;
    sc.seed = 9;
    const Manifest m = generate(sc).first;
    TrainConfig cfg;
    cfg.num_chunks = 8;
    cfg.encoder.model_dim = 16;
    cfg.encoder.mlp_hidden = 16;
    cfg.loss.sigma = 1.0;  // mixes positive and negative pairs
    const double err = gradient_check(m, cfg, 8);
    c.seconds = now_minus(t0);
    c.pass = err < 1e-4 && c.seconds < 120.0;
    std::ostringstream os;
    os << "full objective, D=16 N=8 M=2, max rel err " << err;
    c.detail = os.str();
    return c;
}

Criterion criterion_bootstrap_recovery() {
    Criterion c{3, "bootstrapping recovers distant repeats of a step"};
    const auto t0 = std::chrono::steady_clock::now();
    const double sigma = 10.0;
    double included = 0.0, total = 0.0, included_plain = 0.0;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        SynthConfig sc;
        sc.num_videos = 1;
        sc.num_steps = 5;
        sc.frames_per_video = 500;
        sc.dims = {16};
        sc.cue_noise = 0.0;
        sc.repeat_probability = 1.0;
        sc.fps = 2.0;
        sc.seed = seed;
        auto [manifest, gt] = generate(sc);
        const auto& seq = manifest.records.front().modalities.at("m0");
        Rng rng(derive_seed(seed, 0xB007));
        const auto idx = sample_chunks(int(seq.frame_count()), 256, 1.0, rng);
        const int N = int(idx.size());
        MatrixD raw(N, seq.dim());
        VectorD ts(N);
        VectorI lab(N);
        for (int k = 0; k < N; ++k) {
            raw.row(k) = seq.data.row(idx[std::size_t(k)]).cast<double>();
            ts[k] = seq.timestamps[idx[std::size_t(k)]];
            lab[k] = gt.step_labels[0][idx[std::size_t(k)]];
        }
        const BoolMatrix W = sigma_window(ts, sigma);
        for (int a = 0; a < N; ++a) {
            bool has_distant = false;
            for (int j = 0; j < N && !has_distant; ++j)
                has_distant = lab[j] == lab[a] && std::abs(ts[a] - ts[j]) > sigma;
            if (!has_distant) continue;
            const BootstrapRow br = bootstrap_window(raw, W, a);
            for (int j = 0; j < N; ++j) {
                if (lab[j] != lab[a] || std::abs(ts[a] - ts[j]) <= sigma) continue;
                total += 1.0;
                if (br.w_tilde[j]) included += 1.0;
                if (W(a, j)) included_plain += 1.0;  // plain sigma window, i.e. bootstrap off
            }
        }
    }
    const double frac = total > 0.0 ? included / total : 0.0;
    const double frac_plain = total > 0.0 ? included_plain / total : 1.0;
    c.seconds = now_minus(t0);
    c.pass = total > 0.0 && frac >= 0.90 && frac_plain == 0.0 && c.seconds < 60.0;
    std::ostringstream os;
    os << "100 seeds, zero noise: W~ covers " << 100.0 * frac << "% of distant same-step frames, "
       << 100.0 * frac_plain << "% without bootstrapping";
    c.detail = os.str();
    return c;
}

Criterion criterion_training_beats_baselines() {
    Criterion c{4, "trained representation beats uniform and raw-feature clustering"};
    const auto t0 = std::chrono::steady_clock::now();
    SynthConfig sc;
    sc.num_videos = 5;
    sc.num_steps = 5;
    sc.frames_per_video = 500;
    sc.dims = {128, 128};
    sc.cue_noise = 0.5;
    sc.fps = 3.0;
    sc.seed = 5;
    auto [manifest, gt] = generate(sc);
    const int V = int(manifest.records.size());

    int wins = 0;
    std::ostringstream os;
    for (std::uint64_t tseed : {0ull, 1ull, 2ull}) {
        TrainConfig tc;
        tc.num_chunks = 256;
        tc.epochs = 100;
        tc.seed = tseed;
        const TrainResult r = train(manifest, tc);

        double f1_tr = 0.0, f1_un = 0.0, f1_raw = 0.0;
        for (int v = 0; v < V; ++v) {
            const auto& rec = manifest.records[std::size_t(v)];
            const auto& s0 = rec.modalities.at("m0");
            const MatrixD raw0 = s0.data.cast<double>();
            const int T = int(raw0.rows());
            const MatrixD qt = encode(raw0, s0.timestamps, s0.fps, r.params.modalities[0]);
            const auto& labels = gt.step_labels[std::size_t(v)];
            f1_tr += ksl_metrics(cluster_features(qt, 5, "kmeans", tseed).assignments, labels,
                                 Averaging::per_key_step)
                         .f1;
            f1_un += ksl_metrics(baseline_uniform(T, 5), labels, Averaging::per_key_step).f1;
            MatrixD rawc(T, raw0.cols() + rec.modalities.at("m1").dim());
            rawc << raw0, rec.modalities.at("m1").data.cast<double>();
            f1_raw += ksl_metrics(cluster_features(rawc, 5, "kmeans", tseed).assignments, labels,
                                  Averaging::per_key_step)
                          .f1;
        }
        const double tr = 100.0 * f1_tr / V, un = 100.0 * f1_un / V, rw = 100.0 * f1_raw / V;
        if (tr >= un + 10.0 && tr >= rw + 10.0) ++wins;
        os << (tseed ? "; " : "") << "seed " << tseed << ": trained F1 " << tr << " vs uniform " << un
           << " / raw " << rw;
    }
    c.seconds = now_minus(t0);
    c.pass = wins >= 2 && c.seconds < 600.0;
    c.detail = os.str() + " (need +10 on 2/3 seeds)";
    return c;
}

Criterion criterion_extraction_exactness() {
    Criterion c{5, "key-step extraction is exact on clean segments"};
    const auto t0 = std::chrono::steady_clock::now();
    int good = 0;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        SynthConfig sc;
        sc.num_videos = 1;
        sc.num_steps = 5;
        sc.frames_per_video = 500;
        sc.dims = {16};
        sc.cue_noise = 0.0;
        sc.seed = seed;
        auto [manifest, gt] = generate(sc);
        const auto& seq = manifest.records.front().modalities.at("m0");
        ExtractConfig cfg;
        cfg.num_clusters = 5;
        cfg.background_ratio = 0.0;
        cfg.seed = seed;
        const KeyStepResult res = extract_key_steps(seq.data.cast<double>(), seq.timestamps, cfg);

        // segment id per frame: contiguous runs of the ground-truth label
        const auto& labels = gt.step_labels[0];
        VectorI seg(labels.size());
        int s = 0;
        for (Eigen::Index t = 0; t < labels.size(); ++t) {
            if (t > 0 && labels[t] != labels[t - 1]) ++s;
            seg[t] = s;
        }
        std::set<int> seen_segments, seen_steps;
        for (const KeyStep& k : res.steps) {
            seen_segments.insert(seg[k.frame]);
            seen_steps.insert(labels[k.frame]);
        }
        if (int(res.steps.size()) == 5 && int(seen_segments.size()) == 5 && int(seen_steps.size()) == 5) ++good;
    }
    c.seconds = now_minus(t0);
    c.pass = good == 10 && c.seconds < 60.0;
    std::ostringstream os;
    os << good << "/10 seeds: exactly 5 key steps, one per ground-truth segment";
    c.detail = os.str();
    return c;
}

// fixed injective assignment score, background excluded
long overlap_of(const VectorI& pred, const VectorI& gt, const std::map<int, int>& m) {
    long s = 0;
    for (Eigen::Index t = 0; t < pred.size(); ++t) {
        if (gt[t] < 0) continue;
        auto it = m.find(pred[t]);
        if (it != m.end() && it->second == gt[t]) ++s;
    }
    return s;
}

long brute_force_best(const VectorI& pred, const VectorI& gt, int K, int S, int picks) {
    long best = -1;
    std::vector<int> chosen(std::size_t(K), -1);
    std::function<void(int, int)> rec = [&](int k, int used) {
        if (k == K) {
            std::map<int, int> m;
            for (int i = 0; i < K; ++i)
                if (chosen[std::size_t(i)] >= 0) m[i] = chosen[std::size_t(i)];
            if (int(m.size()) == picks) best = std::max(best, overlap_of(pred, gt, m));
            return;
        }
        chosen[std::size_t(k)] = -1;
        rec(k + 1, used);
        for (int s = 0; s < S; ++s) {
            if (used & (1 << s)) continue;
            chosen[std::size_t(k)] = s;
            rec(k + 1, used | (1 << s));
        }
        chosen[std::size_t(k)] = -1;
    };
    rec(0, 0);
    return best;
}

Criterion criterion_metric_oracles() {
    Criterion c{6, "matching and metrics agree with brute force and hand values"};
    const auto t0 = std::chrono::steady_clock::now();
    bool ok = true;
    std::ostringstream os;

    Rng rng(77);
    int matched = 0;
    for (int rep = 0; rep < 200; ++rep) {
        std::uniform_int_distribution<int> kd(1, 6), td(6, 30);
        const int K = kd(rng), S = kd(rng), T = td(rng);
        std::uniform_int_distribution<int> pd(0, K - 1), gd(-1, S - 1);
        VectorI pred(T), gt(T);
        bool any = false;
        for (int t = 0; t < T; ++t) {
            pred[t] = pd(rng);
            gt[t] = gd(rng);
            any |= gt[t] >= 0;
        }
        if (!any) gt[0] = 0;
        std::set<int> kset, sset;
        for (int t = 0; t < T; ++t) {
            kset.insert(pred[t]);
            if (gt[t] >= 0) sset.insert(gt[t]);
        }
        const int picks = int(std::min(kset.size(), sset.size()));
        const auto match = hungarian_match(pred, gt);
        std::map<int, int> m(match.begin(), match.end());
        if (int(match.size()) == picks &&
            overlap_of(pred, gt, m) == brute_force_best(pred, gt, pred.maxCoeff() + 1, gt.maxCoeff() + 1, picks))
            ++matched;
    }
    ok = ok && matched == 200;
    os << "matching " << matched << "/200 vs brute force";

    VectorI pred(4), gt(4);
    pred << 0, 0, 1, 0;
    gt << 0, 0, 1, 1;
    const KslScores s = ksl_metrics(pred, gt, Averaging::overall);
    const bool f1_ok = std::abs(s.f1 - 0.75) < 1e-12 && std::abs(s.precision - 0.75) < 1e-12 &&
                       std::abs(s.recall - 0.75) < 1e-12;
    ok = ok && f1_ok;
    os << "; worked F1 " << s.f1;

    MatrixD emb(5, 3);
    for (int i = 0; i < 5; ++i) {
        emb(i, 0) = i;
        emb(i, 1) = 0.5 * i * i;
        emb(i, 2) = 1.0;
    }
    MatrixD b(4, 2), a(4, 2);
    b << 0, 0, 10, 0, 20, 0, 30, 0;
    a.row(0) = b.row(1);
    a.row(1) = b.row(0);
    a.row(2) = b.row(2);
    a.row(3) = b.row(3);
    const double tau_id = kendalls_tau(emb, emb);
    const double tau_rev = kendalls_tau(emb, emb.colwise().reverse().eval());
    const double tau_swap = kendalls_tau(a, b);
    const bool tau_ok = std::abs(tau_id - 1.0) < 1e-12 && std::abs(tau_rev + 1.0) < 1e-12 &&
                        std::abs(tau_swap - 2.0 / 3.0) < 1e-12;
    ok = ok && tau_ok;
    os << "; tau " << tau_id << "/" << tau_rev << "/" << tau_swap;

    c.seconds = now_minus(t0);
    c.pass = ok && c.seconds < 60.0;
    c.detail = os.str();
    return c;
}

int run_cli(const std::string& args, const fs::path& stdout_file) {
    const std::string cmd =
        std::string(STEPS_CLI_PATH) + " " + args + " > " + stdout_file.string() + " 2> /dev/null";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

Criterion criterion_default_config() {
    Criterion c{7, "CLI defaults match the published hyperparameters"};
    const auto t0 = std::chrono::steady_clock::now();
    const fs::path dir = fs::temp_directory_path() / ("steps_acc7_" + std::to_string(::getpid()));
    fs::create_directories(dir);

    bool ok = run_cli("train --print-config", dir / "train.json") == 0 &&
              run_cli("extract --print-config", dir / "extract.json") == 0;
    const std::string tr = slurp(dir / "train.json");
    const std::string ex = slurp(dir / "extract.json");
    const std::vector<std::string> train_expect = {
        "\"chunks\": 1024",   "\"beta\": 1.0",      "\"batch-size\": 4", "\"lr\": 0.001",
        "\"epochs\": 300",    "\"sigma\": 10.0",    "\"margin\": 2.0",   "\"layers\": 2",
        "\"heads\": 2",       "\"model-dim\": 128", "\"mlp-hidden\": 128"};
    const std::vector<std::string> extract_expect = {"\"clusters\": 7", "\"alpha\": 0.1",
                                                     "\"gamma-split\": 2.0", "\"clustering\": \"kmeans\""};
    int misses = 0;
    std::ostringstream os;
    for (const auto& e : train_expect)
        if (tr.find(e) == std::string::npos) {
            ++misses;
            os << " missing " << e;
        }
    for (const auto& e : extract_expect)
        if (ex.find(e) == std::string::npos) {
            ++misses;
            os << " missing " << e;
        }
    fs::remove_all(dir);
    c.seconds = now_minus(t0);
    c.pass = ok && misses == 0 && c.seconds < 60.0;
    c.detail = ok ? (misses == 0 ? "train and extract --print-config report all expected defaults"
                                 : "mismatches:" + os.str())
                  : "CLI invocation failed";
    return c;
}

Criterion criterion_determinism() {
    Criterion c{8, "train and extract are byte-identical across reruns"};
    const auto t0 = std::chrono::steady_clock::now();
    const fs::path dir = fs::temp_directory_path() / ("steps_acc8_" + std::to_string(::getpid()));
    fs::create_directories(dir);
    const fs::path data = dir / "data", log = dir / "log.txt";

    bool ok = run_cli("synth --videos 2 --steps 5 --frames 60 --modalities 2 --dims 6 6 --seed 3 --out " +
                          data.string(),
                      log) == 0;
    const std::string train_flags = " --chunks 16 --epochs 2 --batch-size 2 --model-dim 16 --mlp-hidden 16";
    for (const char* run : {"a", "b"}) {
        ok = ok && run_cli("train --manifest " + (data / "manifest.json").string() + " --out " +
                               (dir / ("ck_" + std::string(run))).string() + train_flags,
                           log) == 0;
        ok = ok && run_cli("extract --checkpoint " + (dir / "ck_a" / "model.ckpt").string() + " --manifest " +
                               (data / "manifest.json").string() + " -K 5 --out " +
                               (dir / ("ks_" + std::string(run))).string(),
                           log) == 0;
    }
    bool identical = ok;
    if (ok) {
        identical = slurp(dir / "ck_a" / "model.ckpt") == slurp(dir / "ck_b" / "model.ckpt") &&
                    slurp(dir / "ck_a" / "history.json") == slurp(dir / "ck_b" / "history.json");
        int files = 0;
        for (const auto& e : fs::directory_iterator(dir / "ks_a")) {
            ++files;
            identical = identical && fs::exists(dir / "ks_b" / e.path().filename()) &&
                        slurp(e.path()) == slurp(dir / "ks_b" / e.path().filename());
        }
        identical = identical && files > 0;
    }
    fs::remove_all(dir);
    c.seconds = now_minus(t0);
    c.pass = identical && c.seconds < 120.0;
    c.detail = ok ? (identical ? "model.ckpt, history.json and key-step JSONs identical on rerun"
                               : "outputs differ between reruns")
                  : "CLI invocation failed";
    return c;
}

}  // namespace

int main() {
    std::vector<Criterion> results;
    results.push_back(criterion_loss_oracle());
    results.push_back(criterion_gradients());
    results.push_back(criterion_bootstrap_recovery());
    results.push_back(criterion_training_beats_baselines());
    results.push_back(criterion_extraction_exactness());
    results.push_back(criterion_metric_oracles());
    results.push_back(criterion_default_config());
    results.push_back(criterion_determinism());

    int failures = 0;
    for (const Criterion& c : results) {
        if (!c.pass) ++failures;
        std::printf("[%s] %d. %s — %s (%.1fs)\n", c.pass ? "PASS" : "FAIL", c.id, c.name.c_str(),
                    c.detail.c_str(), c.seconds);
    }
    std::printf("%d/%d acceptance criteria passed\n", int(results.size()) - failures, int(results.size()));
    return failures == 0 ? 0 : 1;
}
