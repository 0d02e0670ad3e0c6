#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "sphcnn/data.hpp"
#include "sphcnn/mesh.hpp"
#include "sphcnn/network.hpp"
#include "sphcnn/operators.hpp"

namespace {

using namespace sphcnn;

constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitNumerical = 3;

ArchitectureSpec arch_by_name(const std::string& name) {
    if (name == "mnist") return mnist_spec();
    if (name == "m40_full") return m40_full_spec();
    if (name == "m40_lean") return m40_lean_spec();
    if (name == "seg") return segmentation_2d3ds_spec();
    if (name == "climate") return climate_spec();
    throw CLI::ValidationError("--arch", "unknown architecture preset: " + name);
}

struct ArchFlags {
    std::string arch = "mnist";
    int level = -1;
    int channels = -1;
    int classes = -1;
    double mult = -1.0;
    std::string mask;
    double dropout = -1.0;

    void attach(CLI::App* cmd) {
        cmd->add_option("--arch", arch,
                        "architecture preset: mnist, m40_full, m40_lean, seg, climate")
            ->capture_default_str();
        cmd->add_option("--level", level, "input mesh level override");
        cmd->add_option("--channels", channels, "input channel override");
        cmd->add_option("--classes", classes, "class count override");
        cmd->add_option("--mult", mult, "width multiplier override");
        cmd->add_option("--mask", mask, "kernel mask, subset of IXYL");
        cmd->add_option("--dropout", dropout, "classifier dropout rate override");
    }

    ArchitectureSpec resolve() const {
        ArchitectureSpec spec = arch_by_name(arch);
        if (level >= 0) spec.input_level = level;
        if (channels >= 0) spec.in_channels = channels;
        if (classes >= 0) spec.classes = classes;
        if (mult >= 0.0) spec.width_multiplier = mult;
        if (!mask.empty()) spec.mask = KernelMask::parse(mask);
        if (dropout >= 0.0) spec.dropout = dropout;
        return spec;
    }
};

struct TrainFlags {
    TrainConfig config;
    std::string weight_mode = "uniform";

    void attach(CLI::App* cmd) {
        cmd->add_option("--epochs", config.epochs)->capture_default_str();
        cmd->add_option("--batch", config.batch_size)->capture_default_str();
        cmd->add_option("--lr", config.lr0)->capture_default_str();
        cmd->add_option("--decay", config.decay)->capture_default_str();
        cmd->add_option("--decay-period", config.decay_period)->capture_default_str();
        cmd->add_option("--seed", config.seed)->capture_default_str();
        cmd->add_option("--weight-mode", weight_mode, "uniform or log-frequency")
            ->capture_default_str();
        cmd->add_flag("--verbose", config.verbose, "epoch progress on stderr");
    }

    TrainConfig resolve() const {
        TrainConfig c = config;
        if (weight_mode == "uniform") c.weight_mode = ClassWeightMode::uniform;
        else if (weight_mode == "log-frequency") c.weight_mode = ClassWeightMode::log_frequency;
        else throw CLI::ValidationError("--weight-mode", "expected uniform or log-frequency");
        return c;
    }
};

void print_eval(const EvalResult& result, bool segmentation, std::ostream& out) {
    out << std::setprecision(6) << "accuracy\t" << result.accuracy << "\n";
    if (segmentation) out << "miou\t" << result.miou << "\n";
    for (std::size_t c = 0; c < result.per_class_accuracy.size(); ++c) {
        out << "class\t" << c << "\t" << result.per_class_accuracy[c];
        if (segmentation) out << "\t" << result.per_class_iou[c];
        out << "\n";
    }
}

int run(int argc, char** argv) {
    CLI::App app{"Spherical CNN on icosahedral meshes"};
    app.require_subcommand(1);
    app.set_config("--config", "", "read defaults from a TOML/INI config file");

    // ---- mesh
    auto* mesh_cmd = app.add_subcommand("mesh", "generate an icosahedral sphere mesh");
    int mesh_level = 0;
    std::string mesh_out, mesh_format = "obj";
    mesh_cmd->add_option("--level", mesh_level, "subdivision level")->required();
    mesh_cmd->add_option("--out", mesh_out, "output path (stdout summary only when empty)");
    mesh_cmd->add_option("--format", mesh_format, "obj or bin")->capture_default_str();

    // ---- ops
    auto* ops_cmd = app.add_subcommand("ops", "export the differential operator matrices");
    int ops_level = 2;
    std::string ops_dir = ".";
    ops_cmd->add_option("--level", ops_level)->required();
    ops_cmd->add_option("--out-dir", ops_dir)->capture_default_str();

    // ---- gradcheck
    auto* gc_cmd = app.add_subcommand("gradcheck", "finite-difference gradient suite");
    int gc_level = 2;
    std::uint64_t gc_seed = 0;
    gc_cmd->add_option("--level", gc_level)->capture_default_str();
    gc_cmd->add_option("--seed", gc_seed)->capture_default_str();

    // ---- prepare-mnist
    auto* prep_cmd =
        app.add_subcommand("prepare-mnist", "project IDX digits onto the sphere");
    std::string prep_images, prep_labels, prep_dir;
    int prep_level = 4, prep_limit = 0;
    double prep_delta_deg = 30.0;
    prep_cmd->add_option("--images", prep_images, "IDX image file")->required();
    prep_cmd->add_option("--labels", prep_labels, "IDX label file")->required();
    prep_cmd->add_option("--out-dir", prep_dir)->required();
    prep_cmd->add_option("--level", prep_level)->capture_default_str();
    prep_cmd->add_option("--delta", prep_delta_deg, "patch half-extent in degrees")
        ->capture_default_str();
    prep_cmd->add_option("--limit", prep_limit, "keep only the first N samples");

    // ---- train
    auto* train_cmd = app.add_subcommand("train", "train a model");
    ArchFlags train_arch;
    TrainFlags train_flags;
    std::string train_manifest, val_manifest, train_out;
    int synth_count = 0;
    train_arch.attach(train_cmd);
    train_flags.attach(train_cmd);
    train_cmd->add_option("--manifest", train_manifest, "training dataset manifest");
    train_cmd->add_option("--val-manifest", val_manifest, "validation dataset manifest");
    train_cmd->add_option("--synth-count", synth_count,
                          "train on this many synthetic segmentation samples instead of a "
                          "manifest");
    train_cmd->add_option("--out-dir", train_out, "checkpoints + report directory")->required();

    // ---- eval
    auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint");
    std::string eval_ckpt, eval_manifest;
    eval_cmd->add_option("--checkpoint", eval_ckpt)->required();
    eval_cmd->add_option("--manifest", eval_manifest)->required();

    // ---- ablate
    auto* abl_cmd = app.add_subcommand("ablate", "train one model per kernel mask");
    ArchFlags abl_arch;
    TrainFlags abl_flags;
    std::string abl_masks = "I,IXY,IL,IXYL", abl_train, abl_test;
    abl_arch.attach(abl_cmd);
    abl_flags.attach(abl_cmd);
    abl_cmd->add_option("--masks", abl_masks, "comma-separated kernel masks")
        ->capture_default_str();
    abl_cmd->add_option("--manifest", abl_train)->required();
    abl_cmd->add_option("--test-manifest", abl_test)->required();

    // ---- bench
    auto* bench_cmd = app.add_subcommand("bench", "inference latency benchmark");
    ArchFlags bench_arch;
    int bench_batch = 8, bench_iters = 64;
    bench_arch.attach(bench_cmd);
    bench_cmd->add_option("--batch", bench_batch)->capture_default_str();
    bench_cmd->add_option("--iters", bench_iters)->capture_default_str();

    // ---- render
    auto* render_cmd =
        app.add_subcommand("render", "render a per-vertex signal to an equirectangular image");
    std::string render_features, render_labels, render_out;
    int render_channel = 0, render_width = 512, render_height = 256;
    render_cmd->add_option("--features", render_features, "feature file (UGSF)");
    render_cmd->add_option("--labels", render_labels, "label file (UGSL)");
    render_cmd->add_option("--channel", render_channel)->capture_default_str();
    render_cmd->add_option("--width", render_width)->capture_default_str();
    render_cmd->add_option("--height", render_height)->capture_default_str();
    render_cmd->add_option("--out", render_out, "output PGM path")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        app.exit(e);
        return 0;
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    }
    OperatorCache cache;

    if (mesh_cmd->parsed()) {
        IcoMesh mesh = mesh_at_level(mesh_level);
        std::cout << "level " << mesh_level << ": V=" << mesh.n_v() << " E=" << mesh.n_e()
                  << " F=" << mesh.n_f() << "\n";
        if (!mesh_out.empty()) {
            if (mesh_format == "obj") {
                std::ofstream out(mesh_out);
                if (!out) throw std::runtime_error("cannot open for writing: " + mesh_out);
                write_obj(mesh, out);
            } else if (mesh_format == "bin") {
                write_mesh_binary(mesh, mesh_out);
            } else {
                throw CLI::ValidationError("--format", "expected obj or bin");
            }
        }
        return 0;
    }

    if (ops_cmd->parsed()) {
        auto ops = cache.operators(ops_level);
        std::filesystem::create_directories(ops_dir);
        auto dump = [&](const SparseMatrix& m, const char* name) {
            std::ofstream out(std::filesystem::path(ops_dir) / name);
            if (!out) throw std::runtime_error(std::string("cannot write ") + name);
            write_matrix_market(m, out);
        };
        dump(ops->identity, "identity.mtx");
        dump(ops->grad_x, "gradx.mtx");
        dump(ops->grad_y, "grady.mtx");
        dump(ops->laplacian, "laplacian.mtx");

        auto mesh = cache.mesh(ops_level);
        const int n_v = mesh->n_v();
        std::vector<double> vz(n_v), lvz(n_v);
        for (int i = 0; i < n_v; ++i) vz[i] = mesh->vertices[i].z;
        ops->laplacian.multiply(vz.data(), lvz.data());
        double max_row_sum = 0.0, num = 0.0, den = 0.0;
        std::vector<double> ones(n_v, 1.0), row_sums(n_v);
        ops->laplacian.multiply(ones.data(), row_sums.data());
        for (int i = 0; i < n_v; ++i) {
            max_row_sum = std::max(max_row_sum, std::abs(row_sums[i]));
            double r = lvz[i] + 2.0 * vz[i];
            num += r * r;
            den += 4.0 * vz[i] * vz[i];
        }
        std::cout << std::setprecision(3) << "laplacian max |row sum| = " << max_row_sum
                  << "\n"
                  << "harmonic l=1 relative L2 error = " << std::sqrt(num / den) << "\n";
        return 0;
    }

    if (gc_cmd->parsed()) {
        GradCheckReport report = run_gradcheck_suite(gc_level, gc_seed, cache);
        for (const auto& c : report.cases)
            std::cout << std::left << std::setw(12) << c.layer << " max rel err "
                      << std::scientific << std::setprecision(3) << c.max_rel_error
                      << " (tol " << c.tolerance << ") " << (c.pass ? "pass" : "FAIL")
                      << "\n";
        std::cout << (report.all_pass ? "ALL PASS" : "FAILED") << "\n";
        return report.all_pass ? 0 : kExitNumerical;
    }

    if (prep_cmd->parsed()) {
        DigitSet digits = load_idx(prep_images, prep_labels);
        IcoMesh mesh = mesh_at_level(prep_level);
        ProjectionSpec spec;
        spec.delta = prep_delta_deg * kPi / 180.0;
        std::filesystem::create_directories(prep_dir);
        std::size_t count = digits.images.size();
        if (prep_limit > 0) count = std::min<std::size_t>(count, prep_limit);
        std::vector<ManifestEntry> entries;
        for (std::size_t i = 0; i < count; ++i) {
            auto signal = project_digit(digits.images[i], digits.rows, digits.cols, spec, mesh);
            std::ostringstream name;
            name << "sample_" << std::setfill('0') << std::setw(6) << i << ".ugsf";
            write_feature_file((std::filesystem::path(prep_dir) / name.str()).string(),
                               prep_level, 1, signal);
            entries.push_back({name.str(), digits.labels[i], ""});
        }
        write_manifest((std::filesystem::path(prep_dir) / "manifest.txt").string(), entries);
        std::cout << "wrote " << count << " samples to " << prep_dir << "\n";
        return 0;
    }

    if (train_cmd->parsed()) {
        ArchitectureSpec spec = train_arch.resolve();
        TrainConfig config = train_flags.resolve();
        Dataset data, val;
        bool have_val = false;
        if (synth_count > 0) {
            spec = train_arch.resolve();
            IcoMesh mesh = mesh_at_level(spec.input_level);
            auto samples = synth_segmentation_set(spec.input_level, spec.classes, synth_count,
                                                  config.seed, mesh);
            data = dataset_from_samples(samples, spec.input_level, spec.classes + 1);
            spec.in_channels = data.channels;
        } else {
            if (train_manifest.empty())
                throw CLI::ValidationError("--manifest", "required unless --synth-count is set");
            data = load_dataset(train_manifest);
            spec.input_level = data.level;
            spec.in_channels = data.channels;
            if (!val_manifest.empty()) {
                val = load_dataset(val_manifest);
                have_val = true;
            }
        }
        std::filesystem::create_directories(train_out);
        config.checkpoint_dir = train_out;
        Model model = build_model(spec, cache, config.seed);
        std::cout << "architecture: " << spec.to_text() << "\n"
                  << "parameters: " << parameter_count(*model.net) << "\n";
        TrainReport report = train(model, data, have_val ? &val : nullptr, config);
        save_checkpoint((std::filesystem::path(train_out) / "final.ckpt").string(), model,
                        nullptr, config.epochs - 1);
        std::ofstream rep(std::filesystem::path(train_out) / "report.txt");
        write_train_report(report, rep);
        if (!report.epochs.empty())
            std::cout << std::setprecision(6)
                      << "final train loss " << report.epochs.back().train_loss
                      << ", train acc " << report.epochs.back().train_acc << "\n";
        return 0;
    }

    if (eval_cmd->parsed()) {
        LoadedCheckpoint loaded = load_checkpoint(eval_ckpt, cache);
        Dataset data = load_dataset(eval_manifest);
        if (data.level != loaded.model.spec.input_level) {
            std::ostringstream msg;
            msg << "eval: dataset level " << data.level << " does not match model level "
                << loaded.model.spec.input_level << " (" << eval_manifest << ")";
            throw DataFormatError(msg.str());
        }
        if (data.channels != loaded.model.spec.in_channels) {
            std::ostringstream msg;
            msg << "eval: dataset has " << data.channels << " channels but the model expects "
                << loaded.model.spec.in_channels << " (" << eval_manifest << ")";
            throw DataFormatError(msg.str());
        }
        EvalResult result = evaluate(loaded.model, data);
        print_eval(result, data.segmentation(), std::cout);
        return 0;
    }

    if (abl_cmd->parsed()) {
        ArchitectureSpec spec = abl_arch.resolve();
        TrainConfig config = abl_flags.resolve();
        Dataset data = load_dataset(abl_train);
        Dataset test = load_dataset(abl_test);
        spec.input_level = data.level;
        spec.in_channels = data.channels;
        std::vector<KernelMask> masks;
        std::stringstream ss(abl_masks);
        std::string tok;
        while (std::getline(ss, tok, ',')) masks.push_back(KernelMask::parse(tok));
        auto rows = ablation_run(spec, masks, data, test, config, cache);
        std::cout << "mask\taccuracy\tparameters\n" << std::setprecision(6);
        for (const auto& r : rows)
            std::cout << r.mask.to_string() << "\t" << r.accuracy << "\t" << r.parameter_count
                      << "\n";
        return 0;
    }

    if (bench_cmd->parsed()) {
        ArchitectureSpec spec = bench_arch.resolve();
        Model model = build_model(spec, cache, 0);
        BenchmarkResult r = benchmark_inference(model, bench_batch, bench_iters);
        std::cout << std::setprecision(4) << "batch " << r.batch_size << ": mean "
                  << r.mean_ms << " ms over " << r.batches
                  << " batches (first batch excluded)\n";
        return 0;
    }

    if (render_cmd->parsed()) {
        if (render_features.empty() == render_labels.empty())
            throw CLI::ValidationError("render", "give exactly one of --features/--labels");
        EquirectImage img;
        if (!render_features.empty()) {
            FeatureFile f = read_feature_file(render_features);
            if (render_channel < 0 || render_channel >= f.channels)
                throw DataFormatError("render: channel out of range");
            std::vector<double> signal(
                f.data.begin() + static_cast<std::size_t>(render_channel) * f.verts,
                f.data.begin() + static_cast<std::size_t>(render_channel + 1) * f.verts);
            double lo = *std::min_element(signal.begin(), signal.end());
            double hi = *std::max_element(signal.begin(), signal.end());
            if (hi > lo)
                for (auto& v : signal) v = (v - lo) / (hi - lo);
            img = render_equirect(signal, mesh_at_level(f.level), render_width, render_height);
        } else {
            int level = 0;
            auto labels = read_label_file(render_labels, &level);
            int max_label = *std::max_element(labels.begin(), labels.end());
            img = render_equirect_labels(labels, mesh_at_level(level), render_width,
                                         render_height);
            for (auto& v : img.pixels) v /= std::max(1, max_label);
        }
        write_pnm(img, render_out);
        std::cout << "wrote " << render_out << "\n";
        return 0;
    }

    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const CLI::Error& e) {
        std::cerr << e.what() << "\n";
        return kExitUsage;
    } catch (const NumericalError& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return kExitNumerical;
    } catch (const DataFormatError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return kExitData;
    } catch (const std::invalid_argument& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::out_of_range& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    }
}
