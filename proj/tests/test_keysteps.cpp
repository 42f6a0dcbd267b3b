#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <set>

#include "steps/errors.hpp"
#include "steps/eval.hpp"
#include "steps/keysteps.hpp"
#include "steps/rng.hpp"
#include "steps/synth.hpp"

using namespace steps;

namespace {

struct SynthCase {
    MatrixD features;   // first-modality raw features, double
    VectorD timestamps;
    VectorI labels;
};

SynthCase synth_case(double repeat_probability, std::uint64_t seed) {
    SynthConfig c;
    c.num_videos = 1;
    c.num_steps = 5;
    c.frames_per_video = 500;
    c.dims = {16};
    c.repeat_probability = repeat_probability;
    c.seed = seed;
    auto [manifest, gt] = generate(c);
    const auto& seq = manifest.records[0].modalities.at("m0");
    SynthCase out;
    out.features = seq.data.cast<double>();
    out.timestamps = seq.timestamps;
    out.labels = gt.step_labels[0];
    return out;
}

}  // namespace

TEST_CASE("cluster_features") {
    SUBCASE("K=1 assigns everything to the mean") {
        MatrixD x(4, 2);
        x << 0, 0, 2, 0, 0, 2, 2, 2;
        const ClusterResult r = cluster_features(x, 1, "kmeans", 0);
        CHECK((r.centers.row(0) - Eigen::RowVector2d(1, 1)).norm() < 1e-9);
        for (int t = 0; t < 4; ++t) {
            CHECK(r.assignments[t] == 0);
            CHECK(r.distances[t] == doctest::Approx(std::sqrt(2.0)).epsilon(1e-9));
        }
    }

    SUBCASE("two well-separated blobs") {
        Rng rng(1);
        std::normal_distribution<double> g(0.0, 0.05);
        MatrixD x(40, 3);
        for (int i = 0; i < 40; ++i) {
            const double base = i < 20 ? 0.0 : 10.0;
            for (int j = 0; j < 3; ++j) x(i, j) = base + g(rng);
        }
        const ClusterResult r = cluster_features(x, 2, "kmeans", 3);
        // every point closer to its own center than to the other one
        for (int i = 0; i < 40; ++i) {
            const double own = (x.row(i) - r.centers.row(r.assignments[i])).norm();
            const double other = (x.row(i) - r.centers.row(1 - r.assignments[i])).norm();
            CHECK(own < other);
        }
        // blob membership is consistent
        for (int i = 1; i < 20; ++i) CHECK(r.assignments[i] == r.assignments[0]);
        for (int i = 21; i < 40; ++i) CHECK(r.assignments[i] == r.assignments[20]);
        CHECK(r.assignments[0] != r.assignments[20]);
    }

    SUBCASE("zero-noise synthetic recovers the steps up to relabeling") {
        const SynthCase sc = synth_case(0.0, 7);
        const ClusterResult r = cluster_features(sc.features, 5, "kmeans", 0);
        const auto match = hungarian_match(r.assignments, sc.labels);
        std::map<int, int> to_step(match.begin(), match.end());
        long agree = 0, total = 0;
        for (int t = 0; t < sc.labels.size(); ++t) {
            if (sc.labels[t] < 0) continue;
            ++total;
            agree += to_step.at(r.assignments[t]) == sc.labels[t] ? 1 : 0;
        }
        CHECK(agree == total);
    }

    SUBCASE("deterministic given seed; T < K rejected") {
        const SynthCase sc = synth_case(0.0, 8);
        const ClusterResult a = cluster_features(sc.features, 5, "kmeans", 42);
        const ClusterResult b = cluster_features(sc.features, 5, "kmeans", 42);
        CHECK(a.assignments == b.assignments);
        CHECK((a.centers - b.centers).norm() == 0.0);
        CHECK_THROWS_AS(cluster_features(MatrixD::Zero(2, 3), 4, "kmeans", 0), DataError);
        CHECK_THROWS_AS(cluster_features(sc.features, 5, "spectral", 0), ConfigError);
    }
}

TEST_CASE("background_reject") {
    VectorD dist(10);
    for (int i = 0; i < 10; ++i) dist[i] = i;  // distance grows with index
    std::vector<int> idx(10);
    for (int i = 0; i < 10; ++i) idx[std::size_t(i)] = i;

    SUBCASE("alpha=0 is the identity") { CHECK(background_reject(idx, dist, 0.0) == idx); }

    SUBCASE("alpha=0.1 on 10 removes exactly the farthest") {
        const auto kept = background_reject(idx, dist, 0.1);
        REQUIRE(kept.size() == 9);
        CHECK(std::find(kept.begin(), kept.end(), 9) == kept.end());
    }

    SUBCASE("ties remove the larger index first") {
        std::vector<int> five = {0, 1, 2, 3, 4};
        const VectorD equal = VectorD::Ones(5);
        const auto kept = background_reject(five, equal, 0.2);  // ceil(1) = 1 removed
        CHECK(kept == std::vector<int>{0, 1, 2, 3});
    }

    SUBCASE("increasing alpha never increases the retained count") {
        std::size_t prev = idx.size();
        for (double a = 0.0; a < 1.0; a += 0.13) {
            const std::size_t n = background_reject(idx, dist, a).size();
            CHECK(n <= prev);
            prev = n;
        }
    }

    SUBCASE("input order preserved") {
        std::vector<int> shuffled = {7, 3, 9, 1};
        VectorD d(10);
        d.setZero();
        d[9] = 5.0;
        CHECK(background_reject(shuffled, d, 0.25) == std::vector<int>{7, 3, 1});
    }
}

TEST_CASE("split_to_segments") {
    VectorD ts(12);
    for (int i = 0; i < 12; ++i) ts[i] = i;  // 1 second apart

    SUBCASE("empty input") {
        CHECK(split_to_segments({}, 3.0, ts).empty());
    }

    SUBCASE("indices at seconds 1,2,3,10,11 with gamma=3") {
        const auto segs = split_to_segments({1, 2, 3, 10, 11}, 3.0, ts);
        REQUIRE(segs.size() == 2);
        CHECK(segs[0] == std::vector<int>{1, 2, 3});
        CHECK(segs[1] == std::vector<int>{10, 11});
    }

    SUBCASE("all gaps within gamma form one segment") {
        const auto segs = split_to_segments({0, 2, 4, 6}, 2.0, ts);
        REQUIRE(segs.size() == 1);
        CHECK(segs[0] == std::vector<int>{0, 2, 4, 6});
    }
}

TEST_CASE("extract_key_steps") {
    SUBCASE("zero-noise, no repeats, alpha=0: exactly K steps, one per gt segment") {
        for (std::uint64_t seed = 0; seed < 10; ++seed) {
            const SynthCase sc = synth_case(0.0, seed);
            ExtractConfig cfg;
            cfg.num_clusters = 5;
            cfg.background_ratio = 0.0;
            cfg.seed = seed;
            const KeyStepResult r = extract_key_steps(sc.features, sc.timestamps, cfg);
            REQUIRE(int(r.steps.size()) == 5);
            std::set<int> seen;
            for (const auto& ks : r.steps) {
                CHECK(sc.labels[ks.frame] >= 0);
                seen.insert(sc.labels[ks.frame]);
            }
            CHECK(int(seen.size()) == 5);  // one key step inside each gt step
        }
    }

    SUBCASE("repeated step yields multiple key steps in distinct segments") {
        const SynthCase sc = synth_case(1.0, 3);
        ExtractConfig cfg;
        cfg.num_clusters = 5;
        cfg.background_ratio = 0.0;
        const KeyStepResult r = extract_key_steps(sc.features, sc.timestamps, cfg);
        CHECK(r.steps.size() > 5);
        std::map<int, int> per_cluster;
        for (const auto& ks : r.steps) per_cluster[ks.cluster] += 1;
        int max_count = 0;
        for (const auto& [c, n] : per_cluster) max_count = std::max(max_count, n);
        CHECK(max_count >= 2);
    }

    SUBCASE("constant features force a single earliest key step") {
        const MatrixD x = MatrixD::Ones(20, 3);
        VectorD ts(20);
        for (int i = 0; i < 20; ++i) ts[i] = 0.1 * i;
        ExtractConfig cfg;
        cfg.num_clusters = 1;
        cfg.background_ratio = 0.0;
        const KeyStepResult r = extract_key_steps(x, ts, cfg);
        REQUIRE(r.steps.size() == 1);
        CHECK(r.steps[0].frame == 0);
    }

    SUBCASE("output sorted by time with consistent distances") {
        const SynthCase sc = synth_case(0.5, 9);
        ExtractConfig cfg;
        const KeyStepResult r = extract_key_steps(sc.features, sc.timestamps, cfg);
        REQUIRE(!r.steps.empty());
        for (std::size_t i = 1; i < r.steps.size(); ++i) CHECK(r.steps[i].time_s >= r.steps[i - 1].time_s);
        for (const auto& ks : r.steps) {
            const double d = (sc.features.row(ks.frame) - r.centers.row(ks.cluster)).norm();
            CHECK(std::abs(d - ks.distance) < 1e-6);
        }
    }

    SUBCASE("JSON serialization carries every field") {
        const SynthCase sc = synth_case(0.0, 2);
        ExtractConfig cfg;
        cfg.num_clusters = 5;
        const std::string js = extract_key_steps(sc.features, sc.timestamps, cfg).to_json();
        CHECK(js.find("\"frame\"") != std::string::npos);
        CHECK(js.find("\"time_s\"") != std::string::npos);
        CHECK(js.find("\"cluster\"") != std::string::npos);
        CHECK(js.find("\"distance\"") != std::string::npos);
    }
}

TEST_CASE("config validation lists supported algorithms") {
    ExtractConfig cfg;
    cfg.clustering = "agglomerative";
    try {
        cfg.validate();
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find("kmeans") != std::string::npos);
    }
    cfg = ExtractConfig{};
    cfg.num_clusters = 0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = ExtractConfig{};
    cfg.background_ratio = 1.0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
}
