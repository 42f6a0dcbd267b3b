#pragma once

#include <Eigen/Dense>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace steps {

using MatrixF = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixD = Eigen::MatrixXd;
using VectorD = Eigen::VectorXd;
using VectorI = Eigen::VectorXi;

// One modality's raw per-frame features for a single video.
// Payload is float32 (matches the on-disk store); training upcasts.
struct FeatureSequence {
    std::string modality_name;
    double fps = 1.0;
    MatrixF data;          // T x D_i
    VectorD timestamps;    // seconds, strictly increasing

    Eigen::Index frame_count() const { return data.rows(); }
    Eigen::Index dim() const { return data.cols(); }

    // Fills timestamps with t / fps.
    void default_timestamps() {
        timestamps.resize(data.rows());
        for (Eigen::Index t = 0; t < data.rows(); ++t) timestamps[t] = double(t) / fps;
    }
};

struct VideoRecord {
    std::string video_id;
    std::map<std::string, FeatureSequence> modalities;
    std::optional<VectorI> step_labels;   // -1 = background, else step id
    std::optional<VectorI> phase_labels;

    Eigen::Index frame_count() const {
        return modalities.empty() ? 0 : modalities.begin()->second.frame_count();
    }
};

struct Manifest {
    std::vector<VideoRecord> records;
    std::vector<std::string> modality_names;  // training order m_1..m_M
};

// Returns one human-readable message per broken invariant; empty = valid.
std::vector<std::string> validate_sequence(const FeatureSequence& seq);
std::vector<std::string> validate_record(const VideoRecord& rec);
std::vector<std::string> validate_manifest(const Manifest& m);

}  // namespace steps
