// Command-line harness: pretrain, train, evaluate, invert, export.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "sparsenet/arch.hpp"
#include "sparsenet/data_io.hpp"
#include "sparsenet/invert.hpp"
#include "sparsenet/protocol.hpp"
#include "sparsenet/training.hpp"

namespace fs = std::filesystem;
using namespace sparsenet;

namespace {

struct RunConfig {
    std::string config_path;
    std::string data;
    std::string test_data;
    std::string arch = "cifar";
    std::string protocol = "RR";
    std::string out = "out";
    std::string checkpoint;
    std::string encoder = "si";
    std::string pool = "max";  // cifar variant
    bool pyramid = false;
    uint64_t seed = 0;
    int epochs = 10;
    double lr = 0.002;
    double lambda_l1 = 0.4;
    int threads = 1;
    int pretrain_patches = 2000;
    int pretrain_epochs = 1;
    int classifier_epochs = 60;

    void apply_file_defaults() {
        if (config_path.empty()) return;
        auto kv = parse_config_file(config_path);
        auto s = [&](const char* k, std::string& dst) {
            if (kv.count(k)) dst = kv[k];
        };
        auto i = [&](const char* k, auto& dst) {
            if (kv.count(k)) dst = static_cast<std::decay_t<decltype(dst)>>(std::stoll(kv[k]));
        };
        auto d = [&](const char* k, double& dst) {
            if (kv.count(k)) dst = std::stod(kv[k]);
        };
        s("data", data);
        s("test_data", test_data);
        s("arch", arch);
        s("protocol", protocol);
        s("out", out);
        s("checkpoint", checkpoint);
        s("encoder", encoder);
        s("pool", pool);
        if (kv.count("pyramid")) pyramid = kv["pyramid"] == "1" || kv["pyramid"] == "true";
        i("seed", seed);
        i("epochs", epochs);
        d("lr", lr);
        d("lambda_l1", lambda_l1);
        i("threads", threads);
        i("pretrain_patches", pretrain_patches);
        i("pretrain_epochs", pretrain_epochs);
        i("classifier_epochs", classifier_epochs);
    }

    std::string resolved() const {
        std::ostringstream ss;
        ss << "data=" << data << "\ntest_data=" << test_data << "\narch=" << arch
           << "\nprotocol=" << protocol << "\nout=" << out << "\ncheckpoint=" << checkpoint
           << "\nencoder=" << encoder << "\npool=" << pool << "\npyramid=" << (pyramid ? 1 : 0)
           << "\nseed=" << seed << "\nepochs=" << epochs << "\nlr=" << lr
           << "\nlambda_l1=" << lambda_l1 << "\nthreads=" << threads
           << "\npretrain_patches=" << pretrain_patches << "\npretrain_epochs=" << pretrain_epochs
           << "\nclassifier_epochs=" << classifier_epochs << "\n";
        return ss.str();
    }
};

void echo_config(const RunConfig& cfg) {
    std::string text = cfg.resolved();
    std::cout << "# resolved config\n" << text;
    fs::create_directories(cfg.out);
    std::ofstream f(fs::path(cfg.out) / "config_resolved.txt");
    f << text;
}

EncoderKind encoder_kind(const RunConfig& cfg) {
    if (cfg.encoder == "si") return EncoderKind::Si;
    if (cfg.encoder == "tanh") return EncoderKind::Tanh;
    throw config_error("encoder must be 'si' or 'tanh'");
}

std::vector<StageConfig> parse_custom_arch(const std::string& path, EncoderKind enc) {
    auto kv = parse_config_file(path);
    std::vector<StageConfig> arch;
    for (int s = 1;; ++s) {
        std::string p = "stage" + std::to_string(s) + ".";
        if (!kv.count(p + "n_out")) break;
        StageConfig c;
        c.encoder = enc;
        c.n_out = std::stoi(kv[p + "n_out"]);
        c.kernel = std::stoi(kv[p + "kernel"]);
        if (kv.count(p + "fan_in")) c.fan_in = std::stoi(kv[p + "fan_in"]);
        std::string norm = kv.count(p + "norm") ? kv[p + "norm"] : "before";
        c.norm = norm == "after" ? NormPlacement::AfterPool
                                 : (norm == "none" ? NormPlacement::None : NormPlacement::BeforePool);
        if (kv.count(p + "norm_window")) c.norm_cfg.window = std::stoi(kv[p + "norm_window"]);
        if (kv.count(p + "pyramid")) {
            c.pyramid = true;
            std::istringstream ss(kv[p + "pyramid"]);
            std::string lvl;
            while (std::getline(ss, lvl, ',')) {
                auto x = lvl.find('x');
                c.pyr.levels.emplace_back(std::stoi(lvl.substr(0, x)), std::stoi(lvl.substr(x + 1)));
            }
        } else {
            c.pool.kind = (kv.count(p + "pool") && kv[p + "pool"] == "max") ? PoolKind::Max
                                                                            : PoolKind::Avg;
            c.pool.window = std::stoi(kv[p + "pool_window"]);
            c.pool.stride = std::stoi(kv[p + "pool_stride"]);
        }
        arch.push_back(c);
    }
    if (arch.empty()) throw config_error("custom arch: no stage1.* keys in config file");
    return arch;
}

std::vector<StageConfig> make_arch(const RunConfig& cfg) {
    EncoderKind enc = encoder_kind(cfg);
    if (cfg.arch == "caltech") return caltech_arch(enc, cfg.pyramid);
    if (cfg.arch == "cifar") return cifar_arch(enc, cfg.pool == "max", cfg.seed);
    if (cfg.arch == "inversion") return inversion_arch(true, enc);
    if (cfg.arch == "inversion-nocn") return inversion_arch(false, enc);
    if (cfg.arch == "custom") return parse_custom_arch(cfg.config_path, enc);
    throw config_error("unknown arch '" + cfg.arch + "'");
}

std::vector<std::string> cifar_bins(const std::string& path, bool test) {
    std::vector<std::string> files;
    if (fs::is_directory(path)) {
        for (const auto& e : fs::directory_iterator(path)) {
            std::string name = e.path().filename().string();
            if (e.path().extension() != ".bin") continue;
            bool is_test = name.find("test") != std::string::npos;
            if (is_test == test) files.push_back(e.path().string());
        }
        std::sort(files.begin(), files.end());
    } else if (!test) {
        files.push_back(path);
    }
    return files;
}

struct LoadedData {
    std::vector<std::pair<Tensor3, int>> train, test;
};

LoadedData load_data(const RunConfig& cfg) {
    if (cfg.data.empty()) throw format_error("no --data given");
    LoadedData d;
    if (cfg.arch == "cifar" || cfg.arch == "custom") {
        Dataset tr = load_cifar10(cifar_bins(cfg.data, false));
        Dataset te;
        if (!cfg.test_data.empty())
            te = load_cifar10(cifar_bins(cfg.test_data, false));
        else {
            auto test_files = cifar_bins(cfg.data, true);
            if (!test_files.empty()) te = load_cifar10(test_files);
        }
        std::vector<Tensor3> train_rgb;
        for (auto& [t, y] : tr.samples) train_rgb.push_back(t);
        ChromaStats stats = chroma_stats(train_rgb);
        for (auto& [t, y] : tr.samples) d.train.emplace_back(preprocess_cifar(t, stats), y);
        for (auto& [t, y] : te.samples) d.test.emplace_back(preprocess_cifar(t, stats), y);
    } else {
        Dataset tr = load_image_directory(cfg.data);
        for (auto& [t, y] : tr.samples) d.train.emplace_back(preprocess_caltech(t), y);
        if (!cfg.test_data.empty()) {
            Dataset te = load_image_directory(cfg.test_data);
            for (auto& [t, y] : te.samples) d.test.emplace_back(preprocess_caltech(t), y);
        }
    }
    if (d.train.empty()) throw format_error("training set is empty");
    return d;
}

TrainHyper make_hyper(const RunConfig& cfg) {
    TrainHyper h;
    h.seed = cfg.seed;
    h.threads = cfg.threads;
    h.supervised_epochs = cfg.epochs;
    h.supervised_lr = cfg.lr;
    h.pretrain_patches = cfg.pretrain_patches;
    h.pretrain_epochs = cfg.pretrain_epochs;
    h.classifier_epochs = cfg.classifier_epochs;
    return h;
}

const KernelBank& stage_bank(const Stage& st) {
    return st.cfg.encoder == EncoderKind::Si ? st.si.W : st.tanh_enc.W;
}

int cmd_pretrain(const RunConfig& cfg) {
    echo_config(cfg);
    Protocol protocol = parse_protocol(cfg.protocol);
    if (!protocol_needs_pretraining(protocol))
        throw config_error("protocol '" + cfg.protocol + "' has no U or D stage: nothing to pretrain");
    LoadedData data = load_data(cfg);
    auto arch = make_arch(cfg);
    if (protocol.stage_init.size() != arch.size())
        throw config_error("protocol stage count does not match architecture");
    const Tensor3& x0 = data.train.front().first;
    int n_classes = 0;
    for (const auto& [t, y] : data.train) n_classes = std::max(n_classes, y + 1);
    Model model = build_model(arch, x0.maps, x0.height, x0.width, n_classes, cfg.seed);
    TrainHyper hyper = make_hyper(cfg);
    pretrain_model(model, data.train, protocol, hyper);
    fs::path outdir(cfg.out);
    save_model(model, (outdir / "checkpoint.bin").string());
    for (size_t s = 0; s < model.stages.size(); ++s)
        export_filter_grid(stage_bank(model.stages[s]),
                           (outdir / ("filters_stage" + std::to_string(s + 1) + ".pgm")).string());
    std::cout << "checkpoint written to " << (outdir / "checkpoint.bin").string() << "\n";
    return 0;
}

int cmd_train(const RunConfig& cfg) {
    echo_config(cfg);
    Protocol protocol = parse_protocol(cfg.protocol);
    protocol.lambda_l1 = cfg.lambda_l1;
    LoadedData data = load_data(cfg);
    auto arch = make_arch(cfg);
    if (protocol.stage_init.size() != arch.size())
        throw config_error("protocol stage count does not match architecture");
    TrainHyper hyper = make_hyper(cfg);

    RunResult result;
    if (protocol_needs_pretraining(protocol) && !cfg.checkpoint.empty()) {
        Model model = load_model(cfg.checkpoint);
        const Tensor3& x0 = data.train.front().first;
        if (model.in_maps != x0.maps || model.in_h != x0.height || model.in_w != x0.width)
            throw config_error("checkpoint input shape does not match dataset");
        result.model = std::move(model);
        fit_head(result.model, data.train, hyper);
        result.metrics = run_supervised_phase(result.model, data.train, data.test, protocol, hyper);
    } else {
        if (protocol_needs_pretraining(protocol))
            std::cout << "note: no --checkpoint given; pretraining inline\n";
        result = run_protocol(data.train, data.test, arch, protocol, hyper);
    }
    fs::path outdir(cfg.out);
    save_model(result.model, (outdir / "model.bin").string());
    write_metrics_csv((outdir / "metrics.csv").string(), result.metrics);
    EvalResult final = evaluate(result.model, data.test.empty() ? data.train : data.test, cfg.threads);
    std::cout << "final " << (data.test.empty() ? "train" : "test") << " accuracy: " << final.accuracy
              << "\n";
    return 0;
}

int cmd_evaluate(const RunConfig& cfg) {
    echo_config(cfg);
    if (cfg.checkpoint.empty()) throw config_error("evaluate needs --model");
    Model model = load_model(cfg.checkpoint);
    LoadedData data = load_data(cfg);
    const auto& split = data.test.empty() ? data.train : data.test;
    EvalResult r = evaluate(model, split, cfg.threads);
    std::cout << "samples=" << split.size() << " loss=" << r.loss << " accuracy=" << r.accuracy
              << "\n";
    return 0;
}

int cmd_invert(const RunConfig& cfg, const std::string& model_cn_path,
               const std::string& model_nocn_path, bool init_original, int steps) {
    echo_config(cfg);
    if (model_cn_path.empty() || model_nocn_path.empty())
        throw config_error("invert needs --model-cn and --model-nocn");
    Model model_cn = load_model(model_cn_path);
    Model model_nocn = load_model(model_nocn_path);
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(cfg.data)) {
        auto ext = e.path().extension().string();
        if (ext == ".pgm" || ext == ".ppm") files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    if (files.empty()) throw format_error("invert: no .pgm/.ppm images in " + cfg.data);
    fs::path outdir(cfg.out);
    fs::create_directories(outdir);
    std::ofstream losscsv(outdir / "loss.csv");
    losscsv << "image,model,step,loss\n";
    int idx = 0;
    for (const auto& file : files) {
        Tensor3 raw = read_pnm(file.string());
        Tensor3 input = preprocess_caltech(raw);
        std::string base = "img" + std::to_string(idx);
        write_pgm_scaled((outdir / (base + "_original.pgm")).string(), input);
        for (int variant = 0; variant < 2; ++variant) {
            const Model& model = variant == 0 ? model_cn : model_nocn;
            const char* tag = variant == 0 ? "cn" : "nocn";
            InversionTask task;
            task.model = &model;
            task.target = feature_maps(model, input);
            task.seed = cfg.seed + idx;
            task.steps = steps;
            if (init_original) task.init_image = input;
            InversionResult res = hallucinate(task);
            write_pgm_scaled((outdir / (base + "_" + tag + ".pgm")).string(), res.image);
            for (size_t s = 0; s < res.loss_trace.size(); ++s)
                losscsv << idx << "," << tag << "," << s << "," << res.loss_trace[s] << "\n";
        }
        ++idx;
    }
    std::cout << "wrote " << idx * 3 << " images to " << outdir.string() << "\n";
    return 0;
}

int cmd_export(const RunConfig& cfg) {
    echo_config(cfg);
    if (cfg.checkpoint.empty()) throw config_error("export needs --model");
    Model model = load_model(cfg.checkpoint);
    fs::path outdir(cfg.out);
    for (size_t s = 0; s < model.stages.size(); ++s)
        export_filter_grid(stage_bank(model.stages[s]),
                           (outdir / ("filters_stage" + std::to_string(s + 1) + ".pgm")).string());
    std::cout << "filter grids written to " << outdir.string() << "\n";
    return 0;
}

void add_common(CLI::App* app, RunConfig& cfg) {
    app->add_option("--config", cfg.config_path, "key=value config file; flags override");
    app->add_option("--data", cfg.data, "dataset path");
    app->add_option("--test-data", cfg.test_data, "test split path");
    app->add_option("--arch", cfg.arch, "caltech | cifar | inversion | inversion-nocn | custom");
    app->add_option("--protocol", cfg.protocol, "training protocol, e.g. D+D+, UU, R+L1R+L1");
    app->add_option("--encoder", cfg.encoder, "si | tanh");
    app->add_option("--pool", cfg.pool, "max | avg (cifar variant)");
    app->add_flag("--pyramid", cfg.pyramid, "pyramid pooling at the final stage");
    app->add_option("--seed", cfg.seed, "run seed (recorded in all outputs)");
    app->add_option("--out", cfg.out, "output directory");
    app->add_option("--epochs", cfg.epochs, "supervised epochs");
    app->add_option("--lr", cfg.lr, "supervised learning rate");
    app->add_option("--lambda-l1", cfg.lambda_l1, "sparse-state L1 penalty weight");
    app->add_option("--threads", cfg.threads, "worker cap for evaluation/feature passes");
    app->add_option("--pretrain-patches", cfg.pretrain_patches, "patches/regions per stage");
    app->add_option("--pretrain-epochs", cfg.pretrain_epochs, "pretraining epochs");
    app->add_option("--classifier-epochs", cfg.classifier_epochs, "head training epochs");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"sparse convolutional feature hierarchies"};
    app.require_subcommand(1);

    RunConfig cfg;
    std::string model_cn, model_nocn, model_path;
    bool init_original = false;
    int invert_steps = 200;

    auto* pre = app.add_subcommand("pretrain", "stage-wise dictionary/encoder pretraining");
    add_common(pre, cfg);
    auto* train = app.add_subcommand("train", "run a full training protocol");
    add_common(train, cfg);
    train->add_option("--checkpoint", cfg.checkpoint, "pretrained checkpoint from 'pretrain'");
    auto* eval = app.add_subcommand("evaluate", "evaluate a trained model");
    add_common(eval, cfg);
    eval->add_option("--model", cfg.checkpoint, "model file");
    auto* inv = app.add_subcommand("invert", "hallucinate inputs from recorded feature maps");
    add_common(inv, cfg);
    inv->add_option("--model-cn", model_cn, "inversion-arch model with contrast normalization");
    inv->add_option("--model-nocn", model_nocn, "inversion-arch model without contrast normalization");
    inv->add_flag("--init-original", init_original, "start descent from the original image");
    inv->add_option("--steps", invert_steps, "descent steps");
    auto* exp = app.add_subcommand("export", "export filter grids from a model");
    add_common(exp, cfg);
    exp->add_option("--model", cfg.checkpoint, "model file");

    try {
        app.parse(argc, argv);
        cfg.apply_file_defaults();
        // flags override file values: re-parse so CLI values win
        app.clear();
        app.parse(argc, argv);
        if (pre->parsed()) return cmd_pretrain(cfg);
        if (train->parsed()) return cmd_train(cfg);
        if (eval->parsed()) return cmd_evaluate(cfg);
        if (inv->parsed()) return cmd_invert(cfg, model_cn, model_nocn, init_original, invert_steps);
        if (exp->parsed()) return cmd_export(cfg);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2;
    } catch (const config_error& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const parameter_error& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const dimension_error& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const format_error& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 3;
    } catch (const numeric_error& e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
