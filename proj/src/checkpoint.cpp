#include "steps/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include <json.hpp>

#include "steps/errors.hpp"

namespace steps {

using nlohmann::json;

namespace {

constexpr char kMagic[4] = {'S', 'T', 'C', 'K'};
constexpr std::uint32_t kVersion = 1;

json config_to_json(const EncoderConfig& c) {
    return json{{"num_layers", c.num_layers},
                {"num_heads", c.num_heads},
                {"model_dim", c.model_dim},
                {"mlp_hidden", c.mlp_hidden},
                {"positional_base", c.positional_base},
                {"pos_placement", c.pos_placement == PosEncPlacement::after_input_proj    ? "after_input_proj"
                                  : c.pos_placement == PosEncPlacement::before_input_proj ? "before_input_proj"
                                                                                          : "attention_only"},
                {"proj_activation", c.proj_activation == ProjectionActivation::gelu ? "gelu" : "identity"},
                {"proj_bias", c.proj_bias}};
}

EncoderConfig config_from_json(const json& j) {
    EncoderConfig c;
    c.num_layers = j.at("num_layers").get<int>();
    c.num_heads = j.at("num_heads").get<int>();
    c.model_dim = j.at("model_dim").get<int>();
    c.mlp_hidden = j.at("mlp_hidden").get<int>();
    c.positional_base = j.at("positional_base").get<double>();
    const std::string placement = j.at("pos_placement").get<std::string>();
    c.pos_placement = placement == "before_input_proj" ? PosEncPlacement::before_input_proj
                      : placement == "attention_only"  ? PosEncPlacement::attention_only
                                                       : PosEncPlacement::after_input_proj;
    c.proj_activation = j.at("proj_activation").get<std::string>() == "identity" ? ProjectionActivation::identity
                                                                                 : ProjectionActivation::gelu;
    c.proj_bias = j.at("proj_bias").get<bool>();
    return c;
}

void write_block(std::ofstream& f, const VectorD& v) {
    f.write(reinterpret_cast<const char*>(v.data()), std::streamsize(sizeof(double)) * v.size());
}

VectorD read_block(std::ifstream& f, Eigen::Index n) {
    VectorD v(n);
    f.read(reinterpret_cast<char*>(v.data()), std::streamsize(sizeof(double)) * n);
    if (std::size_t(f.gcount()) != sizeof(double) * std::size_t(n)) throw DataError("truncated checkpoint block");
    return v;
}

}  // namespace

void save_checkpoint(const std::string& path, const TrainResult& result) {
    const auto& params = result.params;
    json j;
    j["encoder_config"] = config_to_json(params.modalities.empty() ? EncoderConfig{} : params.modalities[0].config);
    json mods = json::array();
    for (std::size_t m = 0; m < params.modality_names.size(); ++m) {
        mods.push_back({{"name", params.modality_names[m]},
                        {"input_dim", params.modalities[m].input_dim},
                        {"param_count", params.modalities[m].flat.size()}});
    }
    j["modalities"] = std::move(mods);
    j["epochs_done"] = result.epochs_done;
    const bool has_adam = !result.adam.m.empty();
    j["has_adam"] = has_adam;
    j["adam_step"] = result.adam.step;
    j["history_loss"] = result.history.epoch_loss;
    j["history_seconds"] = result.history.epoch_seconds;

    const std::string meta = j.dump();
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw DataError("cannot open checkpoint for writing: " + path);
    f.write(kMagic, 4);
    const std::uint32_t ver = kVersion;
    f.write(reinterpret_cast<const char*>(&ver), 4);
    const std::uint64_t len = meta.size();
    f.write(reinterpret_cast<const char*>(&len), 8);
    f.write(meta.data(), std::streamsize(meta.size()));
    for (const auto& mp : params.modalities) write_block(f, mp.flat);
    if (has_adam) {
        for (const auto& m : result.adam.m) write_block(f, m);
        for (const auto& v : result.adam.v) write_block(f, v);
    }
    if (!f) throw DataError("checkpoint write failed: " + path);
}

TrainResult load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot open checkpoint: " + path);
    char magic[4];
    f.read(magic, 4);
    if (!f || std::memcmp(magic, kMagic, 4) != 0) throw DataError("bad magic, not a checkpoint: " + path);
    std::uint32_t ver = 0;
    f.read(reinterpret_cast<char*>(&ver), 4);
    if (ver != kVersion) throw DataError("unsupported checkpoint version: " + path);
    std::uint64_t len = 0;
    f.read(reinterpret_cast<char*>(&len), 8);
    std::string meta(len, '\0');
    f.read(meta.data(), std::streamsize(len));
    if (!f) throw DataError("truncated checkpoint metadata: " + path);
    json j = json::parse(meta);

    TrainResult result;
    const EncoderConfig cfg = config_from_json(j.at("encoder_config"));
    for (const auto& jm : j.at("modalities")) {
        result.params.modality_names.push_back(jm.at("name").get<std::string>());
        ModalityParams mp(cfg, jm.at("input_dim").get<int>());
        if (mp.flat.size() != jm.at("param_count").get<Eigen::Index>())
            throw DataError("checkpoint parameter count mismatch: " + path);
        result.params.modalities.push_back(std::move(mp));
    }
    for (auto& mp : result.params.modalities) mp.flat = read_block(f, mp.flat.size());
    result.epochs_done = j.at("epochs_done").get<int>();
    result.adam.step = j.at("adam_step").get<long>();
    if (j.at("has_adam").get<bool>()) {
        for (auto& mp : result.params.modalities) result.adam.m.push_back(read_block(f, mp.flat.size()));
        for (auto& mp : result.params.modalities) result.adam.v.push_back(read_block(f, mp.flat.size()));
    }
    result.history.epoch_loss = j.at("history_loss").get<std::vector<double>>();
    result.history.epoch_seconds = j.at("history_seconds").get<std::vector<double>>();
    return result;
}

}  // namespace steps
