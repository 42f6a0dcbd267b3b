#include "steps/manifest.hpp"

#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "steps/errors.hpp"
#include "steps/feature_store.hpp"

namespace steps {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json load_json(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw DataError("cannot open: " + path);
    json j;
    try {
        f >> j;
    } catch (const json::parse_error& e) {
        throw DataError("invalid JSON in " + path + ": " + e.what());
    }
    return j;
}

VectorI load_label_array(const std::string& path) {
    json j = load_json(path);
    if (!j.is_array()) throw DataError("label file is not a JSON array: " + path);
    VectorI v(j.size());
    for (std::size_t i = 0; i < j.size(); ++i) v[Eigen::Index(i)] = j[i].get<int>();
    return v;
}

void dump_json(const json& j, const std::string& path) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw DataError("cannot open for writing: " + path);
    f << j.dump(2) << "\n";
}

}  // namespace

Manifest load_manifest(const std::string& path) {
    const fs::path base = fs::path(path).parent_path();
    auto resolve = [&](const std::string& p) { return (fs::path(p).is_absolute() ? fs::path(p) : base / p).string(); };

    json j = load_json(path);
    Manifest m;
    if (!j.contains("modalities") || !j.contains("videos")) {
        throw DataError("manifest missing 'modalities' or 'videos': " + path);
    }
    m.modality_names = j["modalities"].get<std::vector<std::string>>();
    for (const auto& jv : j["videos"]) {
        VideoRecord rec;
        rec.video_id = jv.at("video_id").get<std::string>();
        const double fps = jv.value("fps", 1.0);
        for (const auto& [name, file] : jv.at("features").items()) {
            FeatureSequence seq = read_feature_store(resolve(file.get<std::string>()));
            seq.modality_name = name;
            seq.fps = fps;
            if (jv.contains("timestamps")) {
                const auto ts = jv["timestamps"].get<std::vector<double>>();
                if (Eigen::Index(ts.size()) != seq.frame_count()) {
                    throw DataError("timestamps length mismatch for video " + rec.video_id);
                }
                seq.timestamps = Eigen::Map<const VectorD>(ts.data(), Eigen::Index(ts.size()));
            } else {
                seq.default_timestamps();
            }
            rec.modalities.emplace(name, std::move(seq));
        }
        if (jv.contains("step_labels")) rec.step_labels = load_label_array(resolve(jv["step_labels"].get<std::string>()));
        if (jv.contains("phase_labels")) rec.phase_labels = load_label_array(resolve(jv["phase_labels"].get<std::string>()));
        m.records.push_back(std::move(rec));
    }
    auto violations = validate_manifest(m);
    if (!violations.empty()) throw DataError("manifest " + path + " invalid: " + violations.front());
    return m;
}

std::string save_dataset(const Manifest& m, const std::string& out_dir) {
    fs::create_directories(out_dir);
    json jv_list = json::array();
    for (const auto& rec : m.records) {
        json jv;
        jv["video_id"] = rec.video_id;
        json feats;
        double fps = 1.0;
        for (const auto& [name, seq] : rec.modalities) {
            const std::string fname = rec.video_id + "_" + name + ".stpf";
            write_feature_store(seq, (fs::path(out_dir) / fname).string());
            feats[name] = fname;
            fps = seq.fps;
        }
        jv["fps"] = fps;
        jv["features"] = std::move(feats);
        auto dump_labels = [&](const VectorI& lbl, const std::string& suffix) {
            json arr = json::array();
            for (Eigen::Index i = 0; i < lbl.size(); ++i) arr.push_back(lbl[i]);
            const std::string fname = rec.video_id + suffix;
            dump_json(arr, (fs::path(out_dir) / fname).string());
            return fname;
        };
        if (rec.step_labels) jv["step_labels"] = dump_labels(*rec.step_labels, "_steps.json");
        if (rec.phase_labels) jv["phase_labels"] = dump_labels(*rec.phase_labels, "_phases.json");
        jv_list.push_back(std::move(jv));
    }
    json j;
    j["modalities"] = m.modality_names;
    j["videos"] = std::move(jv_list);
    const std::string mpath = (fs::path(out_dir) / "manifest.json").string();
    dump_json(j, mpath);
    return mpath;
}

}  // namespace steps
