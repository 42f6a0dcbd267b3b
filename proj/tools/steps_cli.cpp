#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "steps/checkpoint.hpp"
#include "steps/errors.hpp"
#include "steps/eval.hpp"
#include "steps/keysteps.hpp"
#include "steps/manifest.hpp"
#include "steps/synth.hpp"
#include "steps/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace steps;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitData = 3;
constexpr int kExitNumeric = 4;

// Applies a JSON config file under CLI precedence: flags > file > defaults.
// Unknown keys in the file are rejected.
void apply_config_file(CLI::App* app, const std::string& path) {
    std::ifstream f(path);
    if (!f) throw DataError("cannot open config file: " + path);
    json j;
    try {
        f >> j;
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("invalid JSON config: ") + e.what());
    }
    for (const auto& [key, value] : j.items()) {
        CLI::Option* opt = nullptr;
        for (auto* o : app->get_options()) {
            if (o->get_lnames().empty()) continue;
            if (o->get_lnames().front() == key) {
                opt = o;
                break;
            }
        }
        if (!opt) throw ConfigError("unknown config key: " + key);
        if (opt->count() > 0) continue;  // flag wins over file
        if (value.is_array()) {
            for (const auto& elem : value)
                opt->add_result(elem.is_string() ? elem.get<std::string>() : elem.dump());
        } else {
            opt->add_result(value.is_string() ? value.get<std::string>() : value.dump());
        }
        opt->run_callback();
    }
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw DataError("cannot open for writing: " + path);
    f << text;
}

std::string variant_name(BootstrapVariant v) {
    switch (v) {
        case BootstrapVariant::union_pos_neg: return "union_pos_neg";
        case BootstrapVariant::union_neg_only: return "union_neg_only";
        case BootstrapVariant::sampled_only: return "sampled_only";
        case BootstrapVariant::none: return "none";
    }
    return "union_pos_neg";
}

BootstrapVariant variant_from_name(const std::string& name) {
    if (name == "union_pos_neg") return BootstrapVariant::union_pos_neg;
    if (name == "union_neg_only") return BootstrapVariant::union_neg_only;
    if (name == "sampled_only") return BootstrapVariant::sampled_only;
    if (name == "none") return BootstrapVariant::none;
    throw ConfigError("unknown bootstrap variant: " + name +
                      " (supported: union_pos_neg union_neg_only sampled_only none)");
}

// ---- synth ----------------------------------------------------------------

struct SynthArgs {
    SynthConfig cfg;
    int modalities = 2;
    std::vector<int> dims;
    std::string out;
    bool print_config = false;
};

json synth_config_json(const SynthArgs& a) {
    return json{{"videos", a.cfg.num_videos},
                {"steps", a.cfg.num_steps},
                {"frames", a.cfg.frames_per_video},
                {"modalities", a.modalities},
                {"dims", a.cfg.dims},
                {"fps", a.cfg.fps},
                {"background-fraction", a.cfg.background_fraction},
                {"repeat-probability", a.cfg.repeat_probability},
                {"cue-noise", a.cfg.cue_noise},
                {"seed", a.cfg.seed},
                {"out", a.out}};
}

int run_synth(SynthArgs& a) {
    if (a.dims.empty())
        a.cfg.dims.assign(std::size_t(a.modalities), 32);
    else
        a.cfg.dims = a.dims;
    if (a.print_config) {
        std::cout << synth_config_json(a).dump(2) << "\n";
        return 0;
    }
    if (a.out.empty()) throw ConfigError("--out is required");
    auto [manifest, gt] = generate(a.cfg);
    save_dataset(manifest, a.out);
    std::cout << "separability " << separability_report(manifest, gt) << "\n";
    std::cerr << "wrote dataset with " << manifest.records.size() << " videos to " << a.out << "\n";
    return 0;
}

// ---- train ----------------------------------------------------------------

struct TrainArgs {
    TrainConfig cfg;
    std::string manifest_path, out;
    std::string bootstrap_variant = "union_pos_neg";
    std::string bootstrap_modality;
    bool no_bootstrap = false;
    bool resume = false;
    bool grad_check = false;
    bool timing = false;  // deterministic mode (default) zeroes wall-clock in artifacts
    bool print_config = false;
};

json train_config_json(const TrainArgs& a) {
    return json{{"manifest", a.manifest_path},
                {"out", a.out},
                {"chunks", a.cfg.num_chunks},
                {"beta", a.cfg.temporal_extent},
                {"batch-size", a.cfg.batch_size},
                {"lr", a.cfg.learning_rate},
                {"epochs", a.cfg.epochs},
                {"lr-drop-epoch", a.cfg.lr_drop_epoch ? json(*a.cfg.lr_drop_epoch) : json(nullptr)},
                {"seed", a.cfg.seed},
                {"optimizer", "adam"},
                {"layers", a.cfg.encoder.num_layers},
                {"heads", a.cfg.encoder.num_heads},
                {"model-dim", a.cfg.encoder.model_dim},
                {"mlp-hidden", a.cfg.encoder.mlp_hidden},
                {"positional-base", a.cfg.encoder.positional_base},
                {"sigma", a.cfg.loss.sigma},
                {"margin", a.cfg.loss.margin},
                {"bootstrap-variant", a.bootstrap_variant},
                {"bootstrap-modality", a.bootstrap_modality.empty() ? "<first>" : a.bootstrap_modality},
                {"no-bootstrap", a.no_bootstrap},
                {"timing", a.timing}};
}

int run_train(TrainArgs& a) {
    a.cfg.loss.bootstrap_variant = variant_from_name(a.bootstrap_variant);
    a.cfg.loss.bootstrap_modality = a.bootstrap_modality;
    a.cfg.loss.bootstrap_enabled = !a.no_bootstrap;
    if (a.print_config) {
        std::cout << train_config_json(a).dump(2) << "\n";
        return 0;
    }
    if (a.manifest_path.empty() || a.out.empty()) throw ConfigError("--manifest and --out are required");
    Manifest manifest = load_manifest(a.manifest_path);

    if (a.grad_check) {
        const double err = gradient_check(manifest, a.cfg);
        std::cout << "grad-check max relative error " << err << "\n";
        if (err > 1e-3) throw NumericError("gradient check failed: max relative error " + std::to_string(err));
    }

    fs::create_directories(a.out);
    const std::string ckpt_path = (fs::path(a.out) / "model.ckpt").string();
    TrainResult resumed;
    const TrainResult* resume_ptr = nullptr;
    if (a.resume) {
        resumed = load_checkpoint(ckpt_path);
        resume_ptr = &resumed;
        std::cerr << "resuming from epoch " << resumed.epochs_done << "\n";
    }
    TrainResult result = train(manifest, a.cfg, resume_ptr);
    if (!a.timing) std::fill(result.history.epoch_seconds.begin(), result.history.epoch_seconds.end(), 0.0);

    save_checkpoint(ckpt_path, result);
    json hist;
    hist["epoch_loss"] = result.history.epoch_loss;
    hist["epoch_seconds"] = result.history.epoch_seconds;
    write_text((fs::path(a.out) / "history.json").string(), hist.dump(2) + "\n");
    std::cerr << "trained " << result.epochs_done << " epochs";
    if (!result.history.epoch_loss.empty()) std::cerr << ", final loss " << result.history.epoch_loss.back();
    std::cerr << "\n";
    return 0;
}

// ---- shared inference helpers ----------------------------------------------

std::vector<std::string> resolve_inference_modalities(const std::string& arg, const EncoderParams& params) {
    if (arg.empty()) return {params.modality_names.front()};
    if (arg == "all") return params.modality_names;
    std::vector<std::string> out;
    std::stringstream ss(arg);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        params.at(item);  // throws ConfigError if unknown
        out.push_back(item);
    }
    if (out.empty()) throw ConfigError("no inference modalities selected");
    return out;
}

// Adapted features for a whole video; multiple modalities are concatenated.
MatrixD adapted_features(const VideoRecord& rec, const EncoderParams& params,
                         const std::vector<std::string>& modalities, int subsample) {
    std::vector<MatrixD> parts;
    Eigen::Index cols = 0;
    for (const auto& name : modalities) {
        const auto& seq = rec.modalities.at(name);
        const Eigen::Index T = seq.frame_count();
        const Eigen::Index n = (T + subsample - 1) / subsample;
        MatrixD raw(n, seq.dim());
        VectorD ts(n);
        for (Eigen::Index i = 0; i < n; ++i) {
            raw.row(i) = seq.data.row(i * subsample).cast<double>();
            ts[i] = seq.timestamps[i * subsample];
        }
        parts.push_back(encode(raw, ts, seq.fps, params.at(name)));
        cols += parts.back().cols();
    }
    MatrixD out(parts.front().rows(), cols);
    Eigen::Index off = 0;
    for (const auto& p : parts) {
        out.middleCols(off, p.cols()) = p;
        off += p.cols();
    }
    return out;
}

VectorD subsampled_timestamps(const VideoRecord& rec, const std::string& modality, int subsample) {
    const auto& seq = rec.modalities.at(modality);
    const Eigen::Index n = (seq.frame_count() + subsample - 1) / subsample;
    VectorD ts(n);
    for (Eigen::Index i = 0; i < n; ++i) ts[i] = seq.timestamps[i * subsample];
    return ts;
}

VectorI subsampled_labels(const VectorI& labels, int subsample) {
    const Eigen::Index n = (labels.size() + subsample - 1) / subsample;
    VectorI out(n);
    for (Eigen::Index i = 0; i < n; ++i) out[i] = labels[i * subsample];
    return out;
}

// ---- extract ----------------------------------------------------------------

struct ExtractArgs {
    ExtractConfig cfg;
    std::string checkpoint, manifest_path, out;
    std::string inference_modalities;
    int subsample = 1;
    bool print_config = false;
};

json extract_config_json(const ExtractArgs& a) {
    return json{{"checkpoint", a.checkpoint},
                {"manifest", a.manifest_path},
                {"out", a.out},
                {"clusters", a.cfg.num_clusters},
                {"alpha", a.cfg.background_ratio},
                {"gamma-split", a.cfg.gamma_split},
                {"clustering", a.cfg.clustering},
                {"seed", a.cfg.seed},
                {"inference-modalities", a.inference_modalities.empty() ? "<first>" : a.inference_modalities},
                {"subsample", a.subsample}};
}

int run_extract(ExtractArgs& a) {
    if (a.print_config) {
        std::cout << extract_config_json(a).dump(2) << "\n";
        return 0;
    }
    a.cfg.validate();
    if (a.checkpoint.empty() || a.manifest_path.empty() || a.out.empty())
        throw ConfigError("--checkpoint, --manifest and --out are required");
    const TrainResult ckpt = load_checkpoint(a.checkpoint);
    Manifest manifest = load_manifest(a.manifest_path);
    const auto modalities = resolve_inference_modalities(a.inference_modalities, ckpt.params);

    fs::create_directories(a.out);
    for (const auto& rec : manifest.records) {
        const MatrixD qtilde = adapted_features(rec, ckpt.params, modalities, a.subsample);
        const VectorD ts = subsampled_timestamps(rec, modalities.front(), a.subsample);
        const KeyStepResult result = extract_key_steps(qtilde, ts, a.cfg);
        write_text((fs::path(a.out) / (rec.video_id + "_keysteps.json")).string(), result.to_json() + "\n");
    }
    std::cerr << "extracted key steps for " << manifest.records.size() << " videos\n";
    return 0;
}

// ---- eval ----------------------------------------------------------------

struct EvalArgs {
    std::string checkpoint, manifest_path, out;
    std::string report_html;
    std::string history_path;
    std::string baselines;  // comma list: random,uniform
    std::vector<double> fractions = {0.1, 0.5, 1.0};
    int clusters = 7;
    int subsample = 1;
    std::uint64_t seed = 0;
    std::string inference_modalities;
    bool print_config = false;
};

json eval_config_json(const EvalArgs& a) {
    return json{{"checkpoint", a.checkpoint},
                {"manifest", a.manifest_path},
                {"out", a.out},
                {"report", a.report_html},
                {"history", a.history_path},
                {"baselines", a.baselines},
                {"fractions", a.fractions},
                {"clusters", a.clusters},
                {"subsample", a.subsample},
                {"seed", a.seed},
                {"inference-modalities", a.inference_modalities.empty() ? "<first>" : a.inference_modalities}};
}

std::string render_report_html(const EvalReport& report, const std::vector<double>& loss_curve);

int run_eval(EvalArgs& a) {
    if (a.print_config) {
        std::cout << eval_config_json(a).dump(2) << "\n";
        return 0;
    }
    if (a.checkpoint.empty() || a.manifest_path.empty()) throw ConfigError("--checkpoint and --manifest are required");
    const TrainResult ckpt = load_checkpoint(a.checkpoint);
    Manifest manifest = load_manifest(a.manifest_path);
    const auto modalities = resolve_inference_modalities(a.inference_modalities, ckpt.params);
    for (const auto& rec : manifest.records) {
        if (!rec.step_labels) throw DataError("record '" + rec.video_id + "' is missing field step_labels");
    }

    // adapted features + labels per video
    std::vector<MatrixD> feats;
    std::vector<VectorI> steps_gt, phases_gt;
    bool have_phases = true;
    for (const auto& rec : manifest.records) {
        feats.push_back(adapted_features(rec, ckpt.params, modalities, a.subsample));
        steps_gt.push_back(subsampled_labels(*rec.step_labels, a.subsample));
        if (rec.phase_labels)
            phases_gt.push_back(subsampled_labels(*rec.phase_labels, a.subsample));
        else
            have_phases = false;
    }

    EvalReport report;

    // KSL: cluster each video, score, average across videos
    auto mean_scores = [&](Averaging mode, const std::vector<VectorI>& preds) {
        KslScores agg;
        agg.mode = mode;
        for (std::size_t v = 0; v < preds.size(); ++v) {
            KslScores s = ksl_metrics(preds[v], steps_gt[v], mode);
            agg.precision += s.precision;
            agg.recall += s.recall;
            agg.f1 += s.f1;
            agg.iou += s.iou;
            for (auto& ss : s.per_step) agg.per_step.push_back(ss);
        }
        const double n = double(preds.size());
        agg.precision /= n;
        agg.recall /= n;
        agg.f1 /= n;
        agg.iou /= n;
        return agg;
    };

    std::vector<VectorI> preds;
    for (std::size_t v = 0; v < feats.size(); ++v) {
        preds.push_back(cluster_features(feats[v], a.clusters, "kmeans", derive_seed(a.seed, v)).assignments);
    }
    report.ksl_per_step = mean_scores(Averaging::per_key_step, preds);
    report.ksl_overall = mean_scores(Averaging::overall, preds);

    // baselines
    std::stringstream bss(a.baselines);
    std::string bname;
    while (std::getline(bss, bname, ',')) {
        if (bname.empty()) continue;
        std::vector<VectorI> bl;
        for (std::size_t v = 0; v < feats.size(); ++v) {
            const int T = int(steps_gt[v].size());
            if (bname == "random")
                bl.push_back(baseline_random(T, a.clusters, derive_seed(a.seed, 0xB000 + v)));
            else if (bname == "uniform")
                bl.push_back(baseline_uniform(T, a.clusters));
            else
                throw ConfigError("unknown baseline '" + bname + "' (supported: random uniform)");
        }
        report.baselines[bname] = mean_scores(Averaging::per_key_step, bl);
        report.baselines[bname + "_overall"] = mean_scores(Averaging::overall, bl);
    }

    // Kendall's tau over all video pairs
    double tau_sum = 0.0;
    for (std::size_t i = 0; i < feats.size(); ++i) {
        for (std::size_t j = i + 1; j < feats.size(); ++j) {
            TauPair p;
            p.video_a = manifest.records[i].video_id;
            p.video_b = manifest.records[j].video_id;
            p.tau = kendalls_tau(feats[i], feats[j]);
            tau_sum += p.tau;
            report.tau_pairs.push_back(std::move(p));
        }
    }
    if (!report.tau_pairs.empty()) report.tau_mean = tau_sum / double(report.tau_pairs.size());

    // phase classification probe: even frames train, odd frames test
    if (have_phases && !a.fractions.empty()) {
        Eigen::Index train_n = 0, test_n = 0, D = feats.front().cols();
        for (std::size_t v = 0; v < feats.size(); ++v) {
            train_n += (feats[v].rows() + 1) / 2;
            test_n += feats[v].rows() / 2;
        }
        MatrixD train_x(train_n, D), test_x(test_n, D);
        VectorI train_y(train_n), test_y(test_n);
        Eigen::Index ti = 0, si = 0;
        for (std::size_t v = 0; v < feats.size(); ++v) {
            for (Eigen::Index t = 0; t < feats[v].rows(); ++t) {
                if (t % 2 == 0) {
                    train_x.row(ti) = feats[v].row(t);
                    train_y[ti++] = phases_gt[v][t];
                } else {
                    test_x.row(si) = feats[v].row(t);
                    test_y[si++] = phases_gt[v][t];
                }
            }
        }
        for (double f : a.fractions) {
            report.phase_accuracy[f] = phase_classification(train_x, train_y, test_x, test_y, f, a.seed);
        }
    }

    const std::string out_json = report.to_json() + "\n";
    if (!a.out.empty())
        write_text(a.out, out_json);
    else
        std::cout << out_json;

    if (!a.report_html.empty()) {
        std::vector<double> loss_curve;
        if (!a.history_path.empty()) {
            std::ifstream hf(a.history_path);
            if (!hf) throw DataError("cannot open history: " + a.history_path);
            json h;
            hf >> h;
            loss_curve = h.at("epoch_loss").get<std::vector<double>>();
        }
        write_text(a.report_html, render_report_html(report, loss_curve));
    }
    return 0;
}

std::string render_report_html(const EvalReport& report, const std::vector<double>& loss_curve) {
    std::ostringstream os;
    os.setf(std::ios::fixed);
    os.precision(1);
    auto row = [&](const std::string& name, const KslScores& s) {
        os << "<tr><td>" << name << "</td><td>" << 100.0 * s.f1 << "</td><td>" << 100.0 * s.iou << "</td><td>"
           << 100.0 * s.precision << "</td><td>" << 100.0 * s.recall << "</td></tr>\n";
    };
    os << "<!doctype html><html><head><meta charset=\"utf-8\"><title>STEPs report</title>\n"
          "<style>body{font-family:sans-serif;margin:2em}table{border-collapse:collapse}"
          "td,th{border:1px solid #999;padding:4px 10px}</style></head><body>\n";
    os << "<h1>Key-step localization</h1>\n<table><tr><th>method</th><th>F1</th><th>IoU</th>"
          "<th>Precision</th><th>Recall</th></tr>\n";
    row("learned (per-key-step)", report.ksl_per_step);
    row("learned (overall)", report.ksl_overall);
    for (const auto& [name, s] : report.baselines) row(name, s);
    os << "</table>\n";
    if (!report.tau_pairs.empty()) {
        os << "<h1>Kendall's tau</h1>\n<table><tr><th>pair</th><th>tau</th></tr>\n";
        os.precision(4);
        for (const auto& p : report.tau_pairs)
            os << "<tr><td>" << p.video_a << " / " << p.video_b << "</td><td>" << p.tau << "</td></tr>\n";
        os << "<tr><td><b>mean</b></td><td>" << report.tau_mean << "</td></tr></table>\n";
    }
    if (!report.phase_accuracy.empty()) {
        os.precision(1);
        os << "<h1>Phase classification</h1>\n<table><tr><th>label fraction</th><th>accuracy</th></tr>\n";
        for (const auto& [f, acc] : report.phase_accuracy)
            os << "<tr><td>" << f << "</td><td>" << 100.0 * acc << "</td></tr>\n";
        os << "</table>\n";
    }
    if (!loss_curve.empty()) {
        const double maxv = *std::max_element(loss_curve.begin(), loss_curve.end());
        os << "<h1>Training loss</h1>\n<svg width=\"640\" height=\"240\" viewBox=\"0 0 640 240\">"
              "<polyline fill=\"none\" stroke=\"steelblue\" stroke-width=\"2\" points=\"";
        os.precision(2);
        for (std::size_t i = 0; i < loss_curve.size(); ++i) {
            const double x = 10.0 + 620.0 * double(i) / double(std::max<std::size_t>(1, loss_curve.size() - 1));
            const double y = 230.0 - 220.0 * (maxv > 0 ? loss_curve[i] / maxv : 0.0);
            os << x << "," << y << " ";
        }
        os << "\"/></svg>\n";
    }
    os << "</body></html>\n";
    return os.str();
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Self-supervised key-step learning from pre-extracted multi-cue features"};
    app.require_subcommand(1);
    int threads = 0;
    if (const char* env = std::getenv("STEPS_THREADS")) threads = std::atoi(env);
    app.add_option("--threads", threads, "Worker thread cap (default: STEPS_THREADS or 1)");

    SynthArgs sa;
    auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic procedural dataset");
    std::string synth_config_file;
    synth_cmd->add_option("--config", synth_config_file, "JSON config file (flags take precedence)");
    synth_cmd->add_option("--videos", sa.cfg.num_videos, "Number of videos")->capture_default_str();
    synth_cmd->add_option("--steps", sa.cfg.num_steps, "Number of key steps")->capture_default_str();
    synth_cmd->add_option("--frames", sa.cfg.frames_per_video, "Frames per video")->capture_default_str();
    synth_cmd->add_option("--modalities", sa.modalities, "Number of modalities")->capture_default_str();
    synth_cmd->add_option("--dims", sa.dims, "Per-modality feature dims (default 32 each)");
    synth_cmd->add_option("--fps", sa.cfg.fps, "Frames per second")->capture_default_str();
    synth_cmd->add_option("--background-fraction", sa.cfg.background_fraction, "Background frame fraction")
        ->capture_default_str();
    synth_cmd->add_option("--repeat-probability", sa.cfg.repeat_probability, "Chance a step recurs later")
        ->capture_default_str();
    synth_cmd->add_option("--cue-noise", sa.cfg.cue_noise, "Feature noise scale")->capture_default_str();
    synth_cmd->add_option("--seed", sa.cfg.seed, "RNG seed")->capture_default_str();
    synth_cmd->add_option("--out", sa.out, "Output directory");
    synth_cmd->add_flag("--print-config", sa.print_config, "Print resolved config and exit");

    TrainArgs ta;
    auto* train_cmd = app.add_subcommand("train", "Train the temporal encoders with the BMC2 loss");
    std::string train_config_file;
    train_cmd->add_option("--config", train_config_file, "JSON config file (flags take precedence)");
    train_cmd->add_option("--manifest", ta.manifest_path, "Dataset manifest");
    train_cmd->add_option("--out", ta.out, "Output directory (model.ckpt, history.json)");
    train_cmd->add_option("--chunks", ta.cfg.num_chunks, "Chunks N per video")->capture_default_str();
    train_cmd->add_option("--beta", ta.cfg.temporal_extent, "Temporal extent in (0,1]")->capture_default_str();
    train_cmd->add_option("--batch-size", ta.cfg.batch_size, "Videos per optimizer step")->capture_default_str();
    train_cmd->add_option("--lr", ta.cfg.learning_rate, "Learning rate")->capture_default_str();
    train_cmd->add_option("--epochs", ta.cfg.epochs, "Training epochs")->capture_default_str();
    train_cmd->add_option("--lr-drop-epoch", ta.cfg.lr_drop_epoch, "Epoch to drop lr by 10x");
    train_cmd->add_option("--seed", ta.cfg.seed, "RNG seed")->capture_default_str();
    train_cmd->add_option("--layers", ta.cfg.encoder.num_layers, "Transformer layers")->capture_default_str();
    train_cmd->add_option("--heads", ta.cfg.encoder.num_heads, "Attention heads")->capture_default_str();
    train_cmd->add_option("--model-dim", ta.cfg.encoder.model_dim, "Model dimension")->capture_default_str();
    train_cmd->add_option("--mlp-hidden", ta.cfg.encoder.mlp_hidden, "Feed-forward hidden dim")
        ->capture_default_str();
    train_cmd->add_option("--positional-base", ta.cfg.encoder.positional_base, "Sinusoid base")
        ->capture_default_str();
    train_cmd->add_option("--sigma", ta.cfg.loss.sigma, "Positive window size, seconds")->capture_default_str();
    train_cmd->add_option("--margin", ta.cfg.loss.margin, "Hinge margin zeta")->capture_default_str();
    train_cmd->add_option("--bootstrap-variant", ta.bootstrap_variant,
                          "union_pos_neg | union_neg_only | sampled_only | none")
        ->capture_default_str();
    train_cmd->add_option("--bootstrap-modality", ta.bootstrap_modality,
                          "Modality for bootstrapping (default first; 'concat' for all)");
    train_cmd->add_flag("--no-bootstrap", ta.no_bootstrap, "Disable window bootstrapping");
    train_cmd->add_flag("--resume", ta.resume, "Continue from an existing checkpoint in --out");
    train_cmd->add_flag("--grad-check", ta.grad_check, "Run a gradient check first, abort if > 1e-3");
    train_cmd->add_flag("--timing", ta.timing, "Record wall-clock times (breaks byte-identical outputs)");
    train_cmd->add_flag("--print-config", ta.print_config, "Print resolved config and exit");

    ExtractArgs xa;
    auto* extract_cmd = app.add_subcommand("extract", "Extract key steps per video");
    std::string extract_config_file;
    extract_cmd->add_option("--config", extract_config_file, "JSON config file (flags take precedence)");
    extract_cmd->add_option("--checkpoint", xa.checkpoint, "Trained model checkpoint");
    extract_cmd->add_option("--manifest", xa.manifest_path, "Dataset manifest");
    extract_cmd->add_option("--out", xa.out, "Output directory for key-step JSON files");
    extract_cmd->add_option("-K,--clusters", xa.cfg.num_clusters, "Number of clusters")->capture_default_str();
    extract_cmd->add_option("--alpha", xa.cfg.background_ratio, "Background rejection ratio")->capture_default_str();
    extract_cmd->add_option("--gamma-split", xa.cfg.gamma_split, "Segment split threshold, seconds")
        ->capture_default_str();
    extract_cmd->add_option("--clustering", xa.cfg.clustering, "Clustering algorithm")->capture_default_str();
    extract_cmd->add_option("--seed", xa.cfg.seed, "RNG seed")->capture_default_str();
    extract_cmd->add_option("--inference-modalities", xa.inference_modalities,
                            "Comma list of modalities (default: first; 'all' concatenates every modality)");
    extract_cmd->add_option("--subsample", xa.subsample, "Evaluate every n-th frame")->capture_default_str();
    extract_cmd->add_flag("--print-config", xa.print_config, "Print resolved config and exit");

    EvalArgs ea;
    auto* eval_cmd = app.add_subcommand("eval", "Evaluate representations (KSL, phases, Kendall's tau)");
    std::string eval_config_file;
    eval_cmd->add_option("--config", eval_config_file, "JSON config file (flags take precedence)");
    eval_cmd->add_option("--checkpoint", ea.checkpoint, "Trained model checkpoint");
    eval_cmd->add_option("--manifest", ea.manifest_path, "Labeled dataset manifest");
    eval_cmd->add_option("--out", ea.out, "Report JSON path (default: stdout)");
    eval_cmd->add_option("--report", ea.report_html, "Static HTML report path");
    eval_cmd->add_option("--history", ea.history_path, "history.json to embed the loss curve");
    eval_cmd->add_option("--baselines", ea.baselines, "Comma list: random,uniform");
    eval_cmd->add_option("--fractions", ea.fractions, "Phase-probe label fractions")->capture_default_str();
    eval_cmd->add_option("-K,--clusters", ea.clusters, "Number of clusters")->capture_default_str();
    eval_cmd->add_option("--subsample", ea.subsample, "Evaluate every n-th frame")->capture_default_str();
    eval_cmd->add_option("--seed", ea.seed, "RNG seed")->capture_default_str();
    eval_cmd->add_option("--inference-modalities", ea.inference_modalities,
                         "Comma list of modalities (default: first; 'all' concatenates every modality)");
    eval_cmd->add_flag("--print-config", ea.print_config, "Print resolved config and exit");

    try {
        app.parse(argc, argv);
        Eigen::setNbThreads(threads > 0 ? threads : 1);
        if (*synth_cmd) {
            if (!synth_config_file.empty()) apply_config_file(synth_cmd, synth_config_file);
            return run_synth(sa);
        }
        if (*train_cmd) {
            if (!train_config_file.empty()) apply_config_file(train_cmd, train_config_file);
            return run_train(ta);
        }
        if (*extract_cmd) {
            if (!extract_config_file.empty()) apply_config_file(extract_cmd, extract_config_file);
            return run_extract(xa);
        }
        if (*eval_cmd) {
            if (!eval_config_file.empty()) apply_config_file(eval_cmd, eval_config_file);
            return run_eval(ea);
        }
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitUsage;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return kExitData;
    } catch (const NumericError& e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return kExitNumeric;
    }
    return 0;
}
