#include "steps/types.hpp"

#include <cmath>
#include <sstream>

namespace steps {

namespace {

std::string at(const std::string& what, const std::string& where) {
    return what + " (" + where + ")";
}

}  // namespace

std::vector<std::string> validate_sequence(const FeatureSequence& seq) {
    std::vector<std::string> out;
    const auto T = seq.data.rows();
    const auto D = seq.data.cols();
    if (T < 1) out.push_back(at("empty feature matrix", seq.modality_name));
    if (D < 1) out.push_back(at("zero feature dimension", seq.modality_name));
    if (!(seq.fps > 0.0)) out.push_back(at("fps must be positive", seq.modality_name));
    if (!seq.data.allFinite()) {
        // name the first offending frame
        for (Eigen::Index t = 0; t < T; ++t) {
            if (!seq.data.row(t).allFinite()) {
                std::ostringstream os;
                os << "non-finite feature value at frame " << t << " (" << seq.modality_name << ")";
                out.push_back(os.str());
                break;
            }
        }
    }
    if (seq.timestamps.size() != T) {
        out.push_back(at("timestamps length != frame count", seq.modality_name));
    } else if (T > 0) {
        if (seq.timestamps[0] < 0.0) out.push_back(at("timestamps[0] < 0", seq.modality_name));
        for (Eigen::Index t = 1; t < T; ++t) {
            if (!(seq.timestamps[t] > seq.timestamps[t - 1])) {
                std::ostringstream os;
                os << "timestamps not strictly increasing at index " << t << " (" << seq.modality_name << ")";
                out.push_back(os.str());
                break;
            }
        }
    }
    return out;
}

std::vector<std::string> validate_record(const VideoRecord& rec) {
    std::vector<std::string> out;
    if (rec.modalities.empty()) {
        out.push_back("record '" + rec.video_id + "' has no modalities");
        return out;
    }
    Eigen::Index T = -1;
    const VectorD* ref_ts = nullptr;
    std::string ref_name;
    for (const auto& [name, seq] : rec.modalities) {
        for (auto& v : validate_sequence(seq)) out.push_back("record '" + rec.video_id + "': " + v);
        if (T < 0) {
            T = seq.frame_count();
            ref_ts = &seq.timestamps;
            ref_name = name;
        } else {
            if (seq.frame_count() != T) {
                std::ostringstream os;
                os << "record '" << rec.video_id << "': frame-count mismatch, " << ref_name << " has " << T
                   << " frames but " << name << " has " << seq.frame_count();
                out.push_back(os.str());
            } else if (ref_ts && seq.timestamps.size() == ref_ts->size() && seq.timestamps != *ref_ts) {
                out.push_back("record '" + rec.video_id + "': timestamps differ between modalities " + ref_name +
                              " and " + name);
            }
        }
    }
    auto check_labels = [&](const std::optional<VectorI>& lbl, const char* which) {
        if (lbl && lbl->size() != T) {
            std::ostringstream os;
            os << "record '" << rec.video_id << "': " << which << " label length " << lbl->size()
               << " != frame count " << T;
            out.push_back(os.str());
        }
    };
    check_labels(rec.step_labels, "step");
    check_labels(rec.phase_labels, "phase");
    return out;
}

std::vector<std::string> validate_manifest(const Manifest& m) {
    std::vector<std::string> out;
    if (m.records.empty()) out.push_back("manifest has no records");
    if (m.modality_names.empty()) out.push_back("manifest lists no modalities");
    for (const auto& rec : m.records) {
        for (auto& v : validate_record(rec)) out.push_back(v);
        for (const auto& name : m.modality_names) {
            if (!rec.modalities.count(name)) {
                out.push_back("record '" + rec.video_id + "' is missing modality '" + name + "'");
            }
        }
    }
    return out;
}

}  // namespace steps
