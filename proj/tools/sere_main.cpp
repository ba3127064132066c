#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "sere/dataset.hpp"
#include "sere/dsp.hpp"
#include "sere/errors.hpp"
#include "sere/io.hpp"
#include "sere/manifest.hpp"
#include "sere/model_io.hpp"
#include "sere/pca.hpp"
#include "sere/tensor_file.hpp"
#include "sere/trainer.hpp"
#include "sere/tric.hpp"
#include "sere/wav.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitDivergence = 3;

struct ExtractOptions {
    std::vector<std::string> inputs;
    std::string out_dir = ".";
    double frame_ms = 25.0;
    double hop_ms = 10.0;
    double fmin = 80.0;
    double fmax = 400.0;
    int n_mels = 26;
    int n_fft = 0;
};

int cmd_extract(const ExtractOptions& opt) {
    fs::create_directories(opt.out_dir);
    const int n = static_cast<int>(opt.inputs.size());
    std::vector<std::string> errors(static_cast<size_t>(n));

#pragma omp parallel for schedule(dynamic)
    for (int i = 0; i < n; ++i) {
        const std::string& path = opt.inputs[static_cast<size_t>(i)];
        try {
            sere::AudioBuffer audio = sere::load_wav(path);
            sere::FrameGrid grid;
            grid.frame_length = static_cast<int>(std::lround(opt.frame_ms * audio.sample_rate / 1000.0));
            grid.hop_length = static_cast<int>(std::lround(opt.hop_ms * audio.sample_rate / 1000.0));
            sere::FeatureConfig cfg;
            cfg.f0_min = opt.fmin;
            cfg.f0_max = opt.fmax;
            cfg.n_mels = opt.n_mels;
            cfg.n_fft = opt.n_fft;
            sere::StaticFeatures feats = sere::extract_static(audio, grid, cfg);
            std::string stem = fs::path(path).stem().string();
            sere::save_tensor((fs::path(opt.out_dir) / (stem + ".feat.sere")).string(), feats);
        } catch (const std::exception& e) {
            errors[static_cast<size_t>(i)] = path + ": " + e.what();
        }
    }

    bool failed = false;
    for (const std::string& err : errors) {
        if (!err.empty()) {
            std::cerr << "error: " << err << "\n";
            failed = true;
        }
    }
    return failed ? kExitData : 0;
}

int cmd_import(const std::string& input, int rows, int cols, const std::string& out) {
    std::string raw = sere::read_file(input);
    const size_t expect = static_cast<size_t>(rows) * cols * 4;
    if (raw.size() != expect) {
        throw sere::ValidationError("import: raw dump is " + std::to_string(raw.size()) +
                                    " bytes, expected " + std::to_string(expect) + " for " +
                                    std::to_string(rows) + "x" + std::to_string(cols));
    }
    sere::Matrix m(rows, cols);
    for (size_t i = 0; i < static_cast<size_t>(rows) * cols; ++i) {
        uint32_t bits = static_cast<uint8_t>(raw[4 * i]) |
                        (static_cast<uint8_t>(raw[4 * i + 1]) << 8) |
                        (static_cast<uint8_t>(raw[4 * i + 2]) << 16) |
                        (static_cast<uint8_t>(raw[4 * i + 3]) << 24);
        float f;
        static_assert(sizeof(float) == 4);
        std::memcpy(&f, &bits, 4);
        if (!std::isfinite(f)) throw sere::ValidationError("import: non-finite value at index " + std::to_string(i));
        m.data()[i] = static_cast<double>(f);
    }
    sere::save_tensor(out, m);
    return 0;
}

struct ResonateOptions {
    std::string file_a;
    std::string file_b;
    std::string features_a;
    std::string features_b;
    double alpha = 1.0;
    double beta = 1.0;
    double gamma = 1.0;
    double delta = 1.0;
    double epsilon = 1e-3;
    std::string out_matrix = "resonance.csv";
    std::string out_align = "alignment.csv";
};

sere::EnhancedRep rep_from_files(const std::string& main_file, const std::string& features_file,
                                 double epsilon) {
    sere::Matrix main = sere::load_tensor(main_file);
    if (features_file.empty()) {
        // the file already holds a fused representation U
        return sere::EnhancedRep{std::move(main), {}};
    }
    sere::Matrix feats = sere::load_tensor(features_file);
    if (feats.cols() != 4) throw sere::ValidationError("feature file must have 4 columns");
    sere::IdfeParams gate = sere::IdfeParams::zeros(main.cols());
    auto [dyn, rep] = sere::run_idfe(feats, main, gate, epsilon);
    return rep;
}

int cmd_resonate(const ResonateOptions& opt) {
    sere::EnhancedRep a = rep_from_files(opt.file_a, opt.features_a, opt.epsilon);
    sere::EnhancedRep b = rep_from_files(opt.file_b, opt.features_b, opt.epsilon);
    sere::IrfParams params{opt.alpha, opt.beta, opt.gamma, opt.delta};
    sere::ResonanceResult res = sere::resonate(a, b, params);

    std::ostringstream matrix_csv;
    for (int i = 0; i < res.R.rows(); ++i) {
        for (int j = 0; j < res.R.cols(); ++j) {
            if (j) matrix_csv << ',';
            matrix_csv << sere::format_double(res.R(i, j));
        }
        matrix_csv << '\n';
    }
    sere::write_file_atomic(opt.out_matrix, matrix_csv.str());

    std::ostringstream align_csv;
    align_csv << "source_frame,target_frame,resonance\n";
    for (int i = 0; i < res.R.rows(); ++i) {
        int j = res.j_star[static_cast<size_t>(i)];
        align_csv << i << ',' << j << ',' << sere::format_double(res.R(i, j)) << '\n';
    }
    sere::write_file_atomic(opt.out_align, align_csv.str());

    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.6f", res.irf);
    std::cout << buf << "\n";
    return 0;
}

sere::TrainConfig load_train_config(const std::string& path) {
    sere::TrainConfig cfg;
    if (path.empty()) return cfg;
    json j;
    try {
        j = json::parse(sere::read_file(path));
    } catch (const json::exception& e) {
        throw sere::FormatError("bad config JSON: " + std::string(e.what()));
    }
    cfg.epochs = j.value("epochs", cfg.epochs);
    cfg.learning_rate = j.value("learning_rate", cfg.learning_rate);
    cfg.beta1 = j.value("beta1", cfg.beta1);
    cfg.beta2 = j.value("beta2", cfg.beta2);
    cfg.adam_eps = j.value("adam_eps", cfg.adam_eps);
    cfg.seed = j.value("seed", cfg.seed);
    cfg.lambda1 = j.value("lambda1", cfg.lambda1);
    cfg.lambda2 = j.value("lambda2", cfg.lambda2);
    cfg.disable_proto = j.value("disable_proto", cfg.disable_proto);
    cfg.disable_dual = j.value("disable_dual", cfg.disable_dual);
    cfg.shots_per_class = j.value("shots_per_class", cfg.shots_per_class);
    cfg.batch_size = j.value("batch_size", cfg.batch_size);
    cfg.epsilon = j.value("epsilon", cfg.epsilon);
    cfg.use_projection_head = j.value("use_projection_head", cfg.use_projection_head);
    return cfg;
}

void apply_env_seed(sere::TrainConfig& cfg) {
    if (const char* env = std::getenv("SERE_SEED")) {
        cfg.seed = std::strtoull(env, nullptr, 10);
    }
}

std::string losses_csv(const sere::TrainResult& result) {
    std::ostringstream out;
    out << "epoch,L_proto,L_dual,L_total\n";
    for (size_t e = 0; e < result.epoch_loss.size(); ++e) {
        const sere::LossDiagnostics& d = result.epoch_loss[e];
        out << e << ',' << sere::format_double(d.proto) << ',' << sere::format_double(d.dual)
            << ',' << sere::format_double(d.total) << '\n';
    }
    return out.str();
}

std::string pseudo_csv(const sere::TrainResult& result, const std::vector<std::string>& classes) {
    std::ostringstream out;
    out << "epoch,id,pseudo_label,irf\n";
    for (const sere::PseudoRow& row : result.pseudo_table) {
        out << row.epoch << ',' << row.id << ',' << classes[static_cast<size_t>(row.pseudo_label)]
            << ',' << sere::format_double(row.irf) << '\n';
    }
    return out.str();
}

std::string irf_hist_csv(const sere::TrainResult& result) {
    // 20 bins over [-1, 1] of the per-epoch target-anchor IRF values
    std::ostringstream out;
    out << "epoch,bin_lo,bin_hi,count\n";
    int max_epoch = -1;
    for (const sere::PseudoRow& row : result.pseudo_table) max_epoch = std::max(max_epoch, row.epoch);
    for (int e = 0; e <= max_epoch; ++e) {
        int counts[20] = {0};
        for (const sere::PseudoRow& row : result.pseudo_table) {
            if (row.epoch != e) continue;
            int bin = static_cast<int>((row.irf + 1.0) / 2.0 * 20.0);
            bin = std::min(19, std::max(0, bin));
            ++counts[bin];
        }
        for (int b = 0; b < 20; ++b) {
            double lo = -1.0 + 2.0 * b / 20.0;
            double hi = -1.0 + 2.0 * (b + 1) / 20.0;
            out << e << ',' << sere::format_double(lo) << ',' << sere::format_double(hi) << ','
                << counts[b] << '\n';
        }
    }
    return out.str();
}

int cmd_train(const std::string& config_path, const std::string& manifest_path,
              const std::string& out_dir, const sere::TrainConfig& overrides,
              const std::vector<bool>& overridden) {
    sere::TrainConfig cfg = load_train_config(config_path);
    // flag overrides win over the config file
    enum { kEpochs, kLr, kSeed, kL1, kL2, kDp, kDd, kShots, kBatch };
    if (overridden[kEpochs]) cfg.epochs = overrides.epochs;
    if (overridden[kLr]) cfg.learning_rate = overrides.learning_rate;
    if (overridden[kSeed]) cfg.seed = overrides.seed;
    if (overridden[kL1]) cfg.lambda1 = overrides.lambda1;
    if (overridden[kL2]) cfg.lambda2 = overrides.lambda2;
    if (overridden[kDp]) cfg.disable_proto = overrides.disable_proto;
    if (overridden[kDd]) cfg.disable_dual = overrides.disable_dual;
    if (overridden[kShots]) cfg.shots_per_class = overrides.shots_per_class;
    if (overridden[kBatch]) cfg.batch_size = overrides.batch_size;
    apply_env_seed(cfg);

    sere::Manifest manifest = sere::load_manifest(manifest_path);
    sere::Dataset data = sere::load_dataset(manifest, cfg.epsilon);

    sere::TrainResult result = sere::train(cfg, data);

    fs::create_directories(out_dir);
    sere::write_file_atomic((fs::path(out_dir) / "losses.csv").string(), losses_csv(result));
    sere::write_file_atomic((fs::path(out_dir) / "pseudo_labels.csv").string(),
                            pseudo_csv(result, data.classes));
    sere::write_file_atomic((fs::path(out_dir) / "irf_hist.csv").string(), irf_hist_csv(result));
    sere::save_model(out_dir, result.model);

    std::cout << "epochs " << result.epoch_loss.size() << ", final loss "
              << sere::format_double(result.final_loss.total) << "\n";
    return 0;
}

int cmd_eval(const std::string& checkpoint, const std::string& manifest_path, int k,
             uint64_t seed, bool seed_given, const std::string& out_csv) {
    if (const char* env = std::getenv("SERE_SEED")) {
        seed = std::strtoull(env, nullptr, 10);
    } else if (!seed_given) {
        seed = 0;
    }

    sere::SereModel model = sere::load_model(checkpoint);
    sere::Manifest manifest = sere::load_manifest(manifest_path);

    if (manifest.classes != model.classes) {
        throw sere::ValidationError("manifest class list does not match checkpoint classes");
    }

    // reference pool: the labeled samples the model trained on
    std::vector<sere::Sample> pool;
    for (const std::string& id : model.labeled_ids) {
        bool found = false;
        for (const sere::ManifestRow& row : manifest.rows) {
            if (row.id == id && row.role == sere::Role::LabeledSource) {
                pool.push_back(sere::load_sample(manifest, row, model.epsilon));
                found = true;
                break;
            }
        }
        if (!found) {
            throw sere::ValidationError("labeled reference '" + id + "' missing from manifest");
        }
    }

    std::vector<sere::Sample> eval_samples;
    for (const sere::ManifestRow& row : manifest.rows) {
        if (row.role == sere::Role::EvalTarget) {
            eval_samples.push_back(sere::load_sample(manifest, row, model.epsilon));
        }
    }
    if (eval_samples.empty()) throw sere::PreconditionError("manifest has no eval_target rows");

    std::vector<int> labels;
    for (const sere::Sample& s : eval_samples) labels.push_back(s.label);
    std::vector<std::vector<size_t>> folds = sere::make_folds(labels, k, seed);

    std::ostringstream csv;
    csv << "fold,class,recall,uar\n";
    double uar_sum = 0.0;
    for (size_t f = 0; f < folds.size(); ++f) {
        std::vector<sere::Sample> fold_samples;
        for (size_t idx : folds[f]) fold_samples.push_back(eval_samples[idx]);
        sere::EvalReport report = sere::evaluate(model, pool, fold_samples, static_cast<int>(f));
        for (size_t c = 0; c < model.classes.size(); ++c) {
            csv << f << ',' << model.classes[c] << ',' << sere::format_double(report.recall[c])
                << ',' << sere::format_double(report.uar) << '\n';
        }
        char buf[64];
        std::snprintf(buf, sizeof(buf), "fold %zu UAR %.6f", f, report.uar);
        std::cout << buf << "\n";
        uar_sum += report.uar;
    }
    char buf[64];
    std::snprintf(buf, sizeof(buf), "mean UAR %.6f", uar_sum / static_cast<double>(folds.size()));
    std::cout << buf << "\n";

    sere::write_file_atomic(out_csv, csv.str());
    return 0;
}

int cmd_export_plot(const std::string& checkpoint, const std::string& manifest_path,
                    const std::string& out_csv) {
    sere::SereModel model = sere::load_model(checkpoint);
    sere::Manifest manifest = sere::load_manifest(manifest_path);

    std::vector<std::string> ids;
    std::vector<std::string> labels;
    std::vector<std::vector<double>> zs;
    for (const sere::ManifestRow& row : manifest.rows) {
        sere::Sample s = sere::load_sample(manifest, row, model.epsilon);
        sere::UttState st = sere::forward_utterance(s, model.params);
        ids.push_back(row.id);
        labels.push_back(row.label);
        zs.push_back(st.z);
    }
    if (zs.size() < 3) throw sere::PreconditionError("export-plot: need at least 3 samples");

    sere::Matrix points(static_cast<int>(zs.size()), static_cast<int>(zs.front().size()));
    for (size_t i = 0; i < zs.size(); ++i) {
        for (size_t m = 0; m < zs[i].size(); ++m) points(static_cast<int>(i), static_cast<int>(m)) = zs[i][m];
    }
    sere::Matrix scores = sere::pca_2d(points);

    std::ostringstream csv;
    csv << "id,label,pc1,pc2\n";
    for (size_t i = 0; i < ids.size(); ++i) {
        csv << ids[i] << ',' << labels[i] << ','
            << sere::format_double(scores(static_cast<int>(i), 0)) << ','
            << sere::format_double(scores(static_cast<int>(i), 1)) << '\n';
    }
    sere::write_file_atomic(out_csv, csv.str());
    std::cout << "wrote " << ids.size() << " points to " << out_csv << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"SERE cross-lingual speech emotion pipeline"};
    app.require_subcommand(1);

    // extract
    ExtractOptions ext;
    CLI::App* extract = app.add_subcommand("extract", "Compute static features from WAV files");
    extract->add_option("wavs", ext.inputs, "input WAV files")->required();
    extract->add_option("--out-dir", ext.out_dir, "output directory");
    extract->add_option("--frame-ms", ext.frame_ms, "frame length in ms");
    extract->add_option("--hop-ms", ext.hop_ms, "hop length in ms");
    extract->add_option("--fmin", ext.fmin, "pitch search floor (Hz)");
    extract->add_option("--fmax", ext.fmax, "pitch search ceiling (Hz)");
    extract->add_option("--n-mels", ext.n_mels, "mel bands");
    extract->add_option("--n-fft", ext.n_fft, "FFT size (0 = auto)");

    // import
    std::string imp_input, imp_out;
    int imp_rows = 0, imp_cols = 0;
    CLI::App* import_cmd = app.add_subcommand("import", "Wrap a raw float32 dump as a tensor file");
    import_cmd->add_option("input", imp_input, "raw little-endian float32 dump")->required();
    import_cmd->add_option("--rows", imp_rows, "frame count T")->required();
    import_cmd->add_option("--cols", imp_cols, "dimension d")->required();
    import_cmd->add_option("--out", imp_out, "output tensor file")->required();

    // resonate
    ResonateOptions res;
    CLI::App* resonate = app.add_subcommand("resonate", "Resonance matrix, alignment and IRF of two utterances");
    resonate->add_option("file_a", res.file_a, "tensor file (fused U, or embeddings with --features-a)")->required();
    resonate->add_option("file_b", res.file_b, "tensor file (fused U, or embeddings with --features-b)")->required();
    resonate->add_option("--features-a", res.features_a, "static features for file A (T x 4)");
    resonate->add_option("--features-b", res.features_b, "static features for file B (T x 4)");
    resonate->add_option("--alpha", res.alpha, "intensity weight for |d1|");
    resonate->add_option("--beta", res.beta, "intensity weight for |d2|");
    resonate->add_option("--gamma", res.gamma, "intensity weight for |d3|+|d4|");
    resonate->add_option("--delta", res.delta, "synchrony temperature");
    resonate->add_option("--epsilon", res.epsilon, "delta-normalization epsilon");
    resonate->add_option("--out-matrix", res.out_matrix, "resonance matrix CSV");
    resonate->add_option("--out-align", res.out_align, "alignment CSV");

    // train
    std::string train_config, train_manifest, train_out = "run";
    sere::TrainConfig ov;
    CLI::App* train = app.add_subcommand("train", "Train the semi-supervised objective");
    train->add_option("--config", train_config, "JSON config file");
    train->add_option("--manifest", train_manifest, "dataset manifest CSV")->required();
    train->add_option("--out-dir", train_out, "output directory");
    auto* o_epochs = train->add_option("--epochs", ov.epochs, "training epochs");
    auto* o_lr = train->add_option("--lr", ov.learning_rate, "learning rate");
    auto* o_seed = train->add_option("--seed", ov.seed, "RNG seed");
    auto* o_l1 = train->add_option("--lambda1", ov.lambda1, "prototype loss weight");
    auto* o_l2 = train->add_option("--lambda2", ov.lambda2, "dual loss weight");
    auto* o_dp = train->add_flag("--disable-proto", ov.disable_proto, "drop the prototype term");
    auto* o_dd = train->add_flag("--disable-dual", ov.disable_dual, "drop the dual term");
    auto* o_shots = train->add_option("--shots", ov.shots_per_class, "labeled samples per class");
    auto* o_batch = train->add_option("--batch-size", ov.batch_size, "unlabeled chunk size (0 = full batch)");

    // eval
    std::string eval_checkpoint, eval_manifest, eval_out = "eval.csv";
    int eval_folds = 5;
    uint64_t eval_seed = 0;
    CLI::App* eval_cmd = app.add_subcommand("eval", "Cross-validated UAR of a checkpoint");
    eval_cmd->add_option("--checkpoint", eval_checkpoint, "checkpoint directory")->required();
    eval_cmd->add_option("--manifest", eval_manifest, "dataset manifest CSV")->required();
    eval_cmd->add_option("--folds", eval_folds, "number of folds");
    auto* o_eval_seed = eval_cmd->add_option("--seed", eval_seed, "fold split seed");
    eval_cmd->add_option("--out", eval_out, "per-fold recall CSV");

    // export-plot
    std::string plot_checkpoint, plot_manifest, plot_out = "plot.csv";
    CLI::App* plot = app.add_subcommand("export-plot", "2-D PCA projection of sample embeddings");
    plot->add_option("--checkpoint", plot_checkpoint, "checkpoint directory")->required();
    plot->add_option("--manifest", plot_manifest, "dataset manifest CSV")->required();
    plot->add_option("--out", plot_out, "projection CSV");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    }

    try {
        if (extract->parsed()) return cmd_extract(ext);
        if (import_cmd->parsed()) return cmd_import(imp_input, imp_rows, imp_cols, imp_out);
        if (resonate->parsed()) return cmd_resonate(res);
        if (train->parsed()) {
            std::vector<bool> overridden = {
                o_epochs->count() > 0, o_lr->count() > 0,    o_seed->count() > 0,
                o_l1->count() > 0,     o_l2->count() > 0,    o_dp->count() > 0,
                o_dd->count() > 0,     o_shots->count() > 0, o_batch->count() > 0,
            };
            return cmd_train(train_config, train_manifest, train_out, ov, overridden);
        }
        if (eval_cmd->parsed()) {
            return cmd_eval(eval_checkpoint, eval_manifest, eval_folds, eval_seed,
                            o_eval_seed->count() > 0, eval_out);
        }
        if (plot->parsed()) return cmd_export_plot(plot_checkpoint, plot_manifest, plot_out);
    } catch (const sere::DivergenceError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitDivergence;
    } catch (const sere::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    }
    return kExitUsage;
}
