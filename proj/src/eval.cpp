#include "steps/eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>

#include <json.hpp>

#include "steps/errors.hpp"
#include "steps/rng.hpp"

namespace steps {

namespace {

// Classic potentials ("Hungarian") algorithm, square cost matrix, minimization.
double hungarian_min(const MatrixD& a) {
    const int n = int(a.rows());
    const double inf = std::numeric_limits<double>::infinity();
    std::vector<double> u(std::size_t(n) + 1, 0.0), v(std::size_t(n) + 1, 0.0);
    std::vector<int> p(std::size_t(n) + 1, 0), way(std::size_t(n) + 1, 0);
    for (int i = 1; i <= n; ++i) {
        p[0] = i;
        int j0 = 0;
        std::vector<double> minv(std::size_t(n) + 1, inf);
        std::vector<bool> used(std::size_t(n) + 1, false);
        do {
            used[std::size_t(j0)] = true;
            const int i0 = p[std::size_t(j0)];
            int j1 = -1;
            double delta = inf;
            for (int j = 1; j <= n; ++j) {
                if (used[std::size_t(j)]) continue;
                const double cur = a(i0 - 1, j - 1) - u[std::size_t(i0)] - v[std::size_t(j)];
                if (cur < minv[std::size_t(j)]) {
                    minv[std::size_t(j)] = cur;
                    way[std::size_t(j)] = j0;
                }
                if (minv[std::size_t(j)] < delta) {
                    delta = minv[std::size_t(j)];
                    j1 = j;
                }
            }
            for (int j = 0; j <= n; ++j) {
                if (used[std::size_t(j)]) {
                    u[std::size_t(p[std::size_t(j)])] += delta;
                    v[std::size_t(j)] -= delta;
                } else {
                    minv[std::size_t(j)] -= delta;
                }
            }
            j0 = j1;
        } while (p[std::size_t(j0)] != 0);
        do {
            const int j1 = way[std::size_t(j0)];
            p[std::size_t(j0)] = p[std::size_t(j1)];
            j0 = j1;
        } while (j0 != 0);
    }
    double total = 0.0;
    for (int j = 1; j <= n; ++j)
        if (p[std::size_t(j)] != 0) total += a(p[std::size_t(j)] - 1, j - 1);
    return total;
}

// Max total overlap over injective cluster->step maps of size min(rows, cols).
// Overlaps are integer counts, so double sums stay exact.
double assignment_value(const MatrixD& score) {
    if (score.rows() == 0 || score.cols() == 0) return 0.0;
    const int n = int(std::max(score.rows(), score.cols()));
    MatrixD cost = MatrixD::Zero(n, n);
    cost.topLeftCorner(score.rows(), score.cols()) = -score;
    return -hungarian_min(cost);
}

double assignment_value_subset(const MatrixD& overlap, const std::vector<int>& clusters,
                               const std::vector<int>& steps) {
    MatrixD sub(Eigen::Index(clusters.size()), Eigen::Index(steps.size()));
    for (std::size_t i = 0; i < clusters.size(); ++i)
        for (std::size_t j = 0; j < steps.size(); ++j) sub(Eigen::Index(i), Eigen::Index(j)) = overlap(clusters[i], steps[j]);
    return assignment_value(sub);
}

std::vector<int> distinct_nonnegative(const VectorI& labels) {
    std::set<int> s;
    for (Eigen::Index t = 0; t < labels.size(); ++t)
        if (labels[t] >= 0) s.insert(labels[t]);
    return {s.begin(), s.end()};
}

}  // namespace

std::vector<std::pair<int, int>> hungarian_match(const VectorI& pred_labels, const VectorI& gt_labels) {
    if (pred_labels.size() != gt_labels.size()) throw DataError("hungarian_match: label length mismatch");
    const std::vector<int> cluster_ids = distinct_nonnegative(pred_labels);
    const std::vector<int> step_ids = distinct_nonnegative(gt_labels);
    const int K = int(cluster_ids.size());
    const int S = int(step_ids.size());
    if (K == 0 || S == 0) return {};

    std::map<int, int> cidx, sidx;
    for (int i = 0; i < K; ++i) cidx[cluster_ids[std::size_t(i)]] = i;
    for (int i = 0; i < S; ++i) sidx[step_ids[std::size_t(i)]] = i;

    MatrixD overlap = MatrixD::Zero(K, S);
    for (Eigen::Index t = 0; t < pred_labels.size(); ++t) {
        if (pred_labels[t] >= 0 && gt_labels[t] >= 0)
            overlap(cidx[pred_labels[t]], sidx[gt_labels[t]]) += 1.0;
    }

    const double best = assignment_value(overlap);

    // fix cluster->step choices greedily, lowest ids first, keeping optimality
    std::vector<int> free_steps(static_cast<std::size_t>(S));
    std::iota(free_steps.begin(), free_steps.end(), 0);
    int unmatched_budget = std::max(0, K - S);
    double forced = 0.0;
    std::vector<std::pair<int, int>> result;
    for (int k = 0; k < K; ++k) {
        std::vector<int> rest_clusters;
        for (int kk = k + 1; kk < K; ++kk) rest_clusters.push_back(kk);
        bool assigned = false;
        for (std::size_t si = 0; si < free_steps.size(); ++si) {
            const int s = free_steps[si];
            std::vector<int> rest_steps = free_steps;
            rest_steps.erase(rest_steps.begin() + long(si));
            const double val = forced + overlap(k, s) + assignment_value_subset(overlap, rest_clusters, rest_steps);
            if (val == best) {
                result.emplace_back(cluster_ids[std::size_t(k)], step_ids[std::size_t(s)]);
                forced += overlap(k, s);
                free_steps.erase(free_steps.begin() + long(si));
                assigned = true;
                break;
            }
        }
        if (!assigned) {
            // this cluster stays unmatched; only legal while the budget lasts
            if (unmatched_budget <= 0) throw NumericError("hungarian_match: inconsistent optimum");
            --unmatched_budget;
        }
    }
    return result;
}

KslScores ksl_metrics(const VectorI& pred_labels, const VectorI& gt_labels, Averaging mode) {
    if (pred_labels.size() != gt_labels.size()) throw DataError("ksl_metrics: label length mismatch");
    const Eigen::Index T = pred_labels.size();
    long gt_key_frames = 0;
    for (Eigen::Index t = 0; t < T; ++t) gt_key_frames += gt_labels[t] >= 0;
    if (gt_key_frames == 0) throw DataError("ksl_metrics: ground truth has no key frames");

    const auto matching = hungarian_match(pred_labels, gt_labels);
    std::map<int, int> cluster_to_step(matching.begin(), matching.end());
    std::map<int, int> step_to_cluster;
    for (const auto& [c, s] : matching) step_to_cluster[s] = c;

    KslScores out;
    out.mode = mode;

    auto harmonic = [](double p, double r) { return (p + r) > 0.0 ? 2.0 * p * r / (p + r) : 0.0; };

    for (int s : distinct_nonnegative(gt_labels)) {
        StepScore ss;
        ss.step = s;
        auto it = step_to_cluster.find(s);
        if (it != step_to_cluster.end()) {
            ss.cluster = it->second;
            long inter = 0, pred_n = 0, gt_n = 0, uni = 0;
            for (Eigen::Index t = 0; t < T; ++t) {
                const bool in_pred = pred_labels[t] == ss.cluster;
                const bool in_gt = gt_labels[t] == s;
                inter += in_pred && in_gt;
                pred_n += in_pred;
                gt_n += in_gt;
                uni += in_pred || in_gt;
            }
            ss.precision = pred_n ? double(inter) / double(pred_n) : 0.0;
            ss.recall = gt_n ? double(inter) / double(gt_n) : 0.0;
            ss.f1 = harmonic(ss.precision, ss.recall);
            ss.iou = uni ? double(inter) / double(uni) : 0.0;
        }
        out.per_step.push_back(ss);
    }

    if (mode == Averaging::per_key_step) {
        for (const auto& ss : out.per_step) {
            out.precision += ss.precision;
            out.recall += ss.recall;
            out.f1 += ss.f1;
            out.iou += ss.iou;
        }
        const double n = double(out.per_step.size());
        out.precision /= n;
        out.recall /= n;
        out.f1 /= n;
        out.iou /= n;
    } else {
        long correct = 0, pred_key = 0;
        for (Eigen::Index t = 0; t < T; ++t) {
            if (pred_labels[t] >= 0) ++pred_key;
            if (gt_labels[t] < 0 || pred_labels[t] < 0) continue;
            auto it = cluster_to_step.find(pred_labels[t]);
            if (it != cluster_to_step.end() && it->second == gt_labels[t]) ++correct;
        }
        out.precision = pred_key ? double(correct) / double(pred_key) : 0.0;
        out.recall = double(correct) / double(gt_key_frames);
        out.f1 = harmonic(out.precision, out.recall);
        const long uni = pred_key + gt_key_frames - correct;
        out.iou = uni ? double(correct) / double(uni) : 0.0;
    }
    return out;
}

double phase_classification(const MatrixD& train_x, const VectorI& train_y, const MatrixD& test_x,
                            const VectorI& test_y, double fraction, std::uint64_t seed) {
    if (train_x.rows() != train_y.size() || test_x.rows() != test_y.size())
        throw DataError("phase_classification: feature/label length mismatch");
    if (!(fraction > 0.0 && fraction <= 1.0)) throw ConfigError("phase_classification: fraction in (0,1]");

    const int num_classes = std::max(train_y.maxCoeff(), test_y.maxCoeff()) + 1;

    // stratified subsample, at least one frame per class present in training
    std::map<int, std::vector<Eigen::Index>> by_class;
    for (Eigen::Index t = 0; t < train_y.size(); ++t) by_class[train_y[t]].push_back(t);
    Rng rng(derive_seed(seed, 0x9A5E));
    std::vector<Eigen::Index> chosen;
    for (auto& [c, idx] : by_class) {
        std::shuffle(idx.begin(), idx.end(), rng);
        const std::size_t n = std::max<std::size_t>(1, std::size_t(std::llround(fraction * double(idx.size()))));
        chosen.insert(chosen.end(), idx.begin(), idx.begin() + long(std::min(n, idx.size())));
    }
    std::sort(chosen.begin(), chosen.end());

    MatrixD X(Eigen::Index(chosen.size()), train_x.cols());
    VectorI Y(Eigen::Index(chosen.size()));
    for (std::size_t i = 0; i < chosen.size(); ++i) {
        X.row(Eigen::Index(i)) = train_x.row(chosen[i]);
        Y[Eigen::Index(i)] = train_y[chosen[i]];
    }

    // standardize from the selected subset
    const Eigen::RowVectorXd mean = X.colwise().mean();
    Eigen::RowVectorXd stdev = ((X.rowwise() - mean).array().square().colwise().mean()).sqrt();
    stdev = stdev.cwiseMax(1e-8);
    MatrixD Xs = (X.rowwise() - mean).array().rowwise() / stdev.array();

    // multinomial logistic regression, full-batch Adam
    const Eigen::Index D = Xs.cols();
    MatrixD W = MatrixD::Zero(D + 1, num_classes);
    MatrixD mW = W, vW = W;
    MatrixD Xb(Xs.rows(), D + 1);
    Xb << Xs, VectorD::Ones(Xs.rows());
    constexpr double lr = 0.1, b1 = 0.9, b2 = 0.999, adam_eps = 1e-8, l2 = 1e-4;
    constexpr int iters = 300;
    for (int it = 1; it <= iters; ++it) {
        MatrixD logits = Xb * W;
        MatrixD probs(logits.rows(), logits.cols());
        for (Eigen::Index i = 0; i < logits.rows(); ++i) {
            Eigen::ArrayXd row = logits.row(i).array();
            row -= row.maxCoeff();
            row = row.exp();
            probs.row(i) = (row / row.sum()).matrix();
        }
        for (Eigen::Index i = 0; i < probs.rows(); ++i) probs(i, Y[i]) -= 1.0;
        MatrixD grad = Xb.transpose() * probs / double(Xb.rows());
        grad.topRows(D) += l2 * W.topRows(D);
        mW = b1 * mW + (1.0 - b1) * grad;
        vW = b2 * vW + (1.0 - b2) * grad.cwiseProduct(grad);
        const double bc1 = 1.0 - std::pow(b1, it);
        const double bc2 = 1.0 - std::pow(b2, it);
        W.array() -= lr * (mW.array() / bc1) / ((vW.array() / bc2).sqrt() + adam_eps);
    }

    MatrixD Xt = (test_x.rowwise() - mean).array().rowwise() / stdev.array();
    MatrixD Xtb(Xt.rows(), D + 1);
    Xtb << Xt, VectorD::Ones(Xt.rows());
    const MatrixD logits = Xtb * W;
    long correct = 0;
    for (Eigen::Index i = 0; i < logits.rows(); ++i) {
        Eigen::Index arg = 0;
        logits.row(i).maxCoeff(&arg);
        correct += int(arg) == test_y[i];
    }
    return test_y.size() ? double(correct) / double(test_y.size()) : 0.0;
}

double kendalls_tau(const MatrixD& emb_a, const MatrixD& emb_b) {
    const Eigen::Index Ta = emb_a.rows(), Tb = emb_b.rows();
    if (Ta < 2 || Tb < 1) throw DataError("kendalls_tau: need at least 2 and 1 frames");
    std::vector<Eigen::Index> nn(static_cast<std::size_t>(Ta));
    for (Eigen::Index i = 0; i < Ta; ++i) {
        double best = std::numeric_limits<double>::infinity();
        Eigen::Index arg = 0;
        for (Eigen::Index j = 0; j < Tb; ++j) {
            const double d = (emb_a.row(i) - emb_b.row(j)).squaredNorm();
            if (d < best) {  // strict: ties keep the lowest index
                best = d;
                arg = j;
            }
        }
        nn[std::size_t(i)] = arg;
    }
    long concordant = 0, discordant = 0;
    for (Eigen::Index i = 0; i < Ta; ++i) {
        for (Eigen::Index j = i + 1; j < Ta; ++j) {
            const double prod = double(i - j) * double(nn[std::size_t(i)] - nn[std::size_t(j)]);
            if (prod > 0.0)
                ++concordant;
            else
                ++discordant;  // zero products count as discordant
        }
    }
    const double pairs = double(Ta) * double(Ta - 1) / 2.0;
    return (double(concordant) - double(discordant)) / pairs;
}

VectorI baseline_random(int num_frames, int num_clusters, std::uint64_t seed) {
    if (num_frames < num_clusters) throw DataError("baseline_random: fewer frames than clusters");
    Rng rng(derive_seed(seed, 0xBA5E));
    std::uniform_int_distribution<int> pick(0, num_clusters - 1);
    VectorI labels(num_frames);
    for (int t = 0; t < num_frames; ++t) labels[t] = pick(rng);
    return labels;
}

VectorI baseline_uniform(int num_frames, int num_clusters) {
    if (num_frames < num_clusters) throw DataError("baseline_uniform: fewer frames than clusters");
    VectorI labels(num_frames);
    for (int t = 0; t < num_frames; ++t) labels[t] = int((long(t) * num_clusters) / num_frames);
    return labels;
}

std::string EvalReport::to_json() const {
    using nlohmann::json;
    auto scores_json = [](const KslScores& s) {
        json per = json::array();
        for (const auto& ss : s.per_step) {
            per.push_back({{"step", ss.step},
                           {"cluster", ss.cluster},
                           {"precision", ss.precision},
                           {"recall", ss.recall},
                           {"f1", ss.f1},
                           {"iou", ss.iou}});
        }
        return json{{"mode", s.mode == Averaging::per_key_step ? "per_key_step" : "overall"},
                    {"precision", s.precision},
                    {"recall", s.recall},
                    {"f1", s.f1},
                    {"iou", s.iou},
                    {"per_step", std::move(per)}};
    };
    json j;
    j["ksl"]["per_key_step"] = scores_json(ksl_per_step);
    j["ksl"]["overall"] = scores_json(ksl_overall);
    for (const auto& [name, s] : baselines) j["baselines"][name] = scores_json(s);
    json pairs = json::array();
    for (const auto& p : tau_pairs)
        pairs.push_back({{"video_a", p.video_a}, {"video_b", p.video_b}, {"tau", p.tau}});
    j["kendalls_tau"]["pairs"] = std::move(pairs);
    j["kendalls_tau"]["mean"] = tau_mean;
    for (const auto& [f, acc] : phase_accuracy) j["phase_accuracy"][std::to_string(f)] = acc;
    return j.dump(2);
}

}  // namespace steps
