#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <mutex>
#include <string>
#include <vector>

#include "hspi/config.hpp"
#include "hspi/pipeline.hpp"
#include "hspi/render.hpp"
#include "hspi/train.hpp"

namespace fs = std::filesystem;
using namespace hspi;

namespace {

// Shared configuration flags. Resolution order: preset, then config file,
// then explicit flags.
struct ConfigCli {
    std::string preset = "desk";
    std::string config_path;
    RunConfig flags;  // flag storage; only options with count() > 0 apply

    CLI::Option *o_seed = nullptr, *o_jobs = nullptr, *o_image_size = nullptr,
                *o_num_sizes = nullptr, *o_grid_base = nullptr, *o_stages = nullptr,
                *o_benchmark = nullptr, *o_zeta = nullptr, *o_alpha = nullptr,
                *o_beta = nullptr, *o_lambda = nullptr, *o_lr = nullptr,
                *o_epochs = nullptr, *o_check = nullptr, *o_eps = nullptr;

    void attach(CLI::App* app) {
        app->add_option("--preset", preset, "Configuration preset: desk or paper");
        app->add_option("--config", config_path, "JSON config file overlaying the preset");
        o_seed = app->add_option("--seed", flags.seed, "Master seed for all derived streams");
        o_jobs = app->add_option("--jobs", flags.jobs, "Parallel image workers");
        o_image_size = app->add_option("--image-size", flags.image_size, "Image height/width");
        o_num_sizes = app->add_option("--sizes", flags.num_sizes, "Number of grid sizes I");
        o_grid_base = app->add_option("--grid-base", flags.grid_base, "Grid size rule H_i = base + i");
        o_stages = app->add_option("--stages", flags.stages, "Hierarchy stages J");
        o_benchmark = app->add_option("--benchmark", flags.benchmark, "Benchmark size index i_b");
        o_zeta = app->add_option("--zeta", flags.zeta, "Initial mask value");
        o_alpha = app->add_option("--alpha", flags.alpha, "Similarity-loss threshold");
        o_beta = app->add_option("--beta", flags.beta, "Mask-loss threshold");
        o_lambda = app->add_option("--lambda", flags.lambda, "Mask-loss balance factor");
        o_lr = app->add_option("--mask-lr", flags.learning_rate, "Mask learning rate");
        o_epochs = app->add_option("--epochs", flags.epochs, "Mask training epochs n_t");
        o_check = app->add_option("--check-every", flags.check_every, "Epoch stride between checks");
        o_eps = app->add_option("--vote-threshold", flags.vote_threshold, "Patch votes needed");
    }

    RunConfig resolve() const {
        RunConfig cfg = preset_by_name(preset);
        if (!config_path.empty()) cfg = load_run_config(config_path, cfg);
        auto apply = [](CLI::Option* o, auto& dst, const auto& src) {
            if (o && o->count()) dst = src;
        };
        apply(o_seed, cfg.seed, flags.seed);
        apply(o_jobs, cfg.jobs, flags.jobs);
        apply(o_image_size, cfg.image_size, flags.image_size);
        apply(o_num_sizes, cfg.num_sizes, flags.num_sizes);
        apply(o_grid_base, cfg.grid_base, flags.grid_base);
        apply(o_stages, cfg.stages, flags.stages);
        apply(o_benchmark, cfg.benchmark, flags.benchmark);
        apply(o_zeta, cfg.zeta, flags.zeta);
        apply(o_alpha, cfg.alpha, flags.alpha);
        apply(o_beta, cfg.beta, flags.beta);
        apply(o_lambda, cfg.lambda, flags.lambda);
        apply(o_lr, cfg.learning_rate, flags.learning_rate);
        apply(o_epochs, cfg.epochs, flags.epochs);
        apply(o_check, cfg.check_every, flags.check_every);
        apply(o_eps, cfg.vote_threshold, flags.vote_threshold);
        cfg.validate();
        return cfg;
    }
};

std::string image_stem(const std::string& file) {
    return fs::path(file).stem().string();
}

int cmd_gen_data(const ConfigCli& cli, const std::string& out, bool force) {
    RunConfig cfg = cli.resolve();
    if (fs::exists(out) && !fs::is_empty(out) && !force)
        throw ConfigError("output directory exists and is not empty (use --force): " + out);

    auto train_split = generate(cfg.synth_split(false));
    auto test_split = generate(cfg.synth_split(true));
    write_dataset((fs::path(out) / "train").string(), train_split);
    write_dataset((fs::path(out) / "test").string(), test_split);
    std::printf("wrote %zu train + %zu test samples to %s\n", train_split.size(),
                test_split.size(), out.c_str());
    return 0;
}

int cmd_train(const ConfigCli& cli, const std::string& data, const std::string& out) {
    RunConfig cfg = cli.resolve();
    fs::path train_dir = fs::path(data) / "train";
    fs::path test_dir = fs::path(data) / "test";
    if (!fs::exists(train_dir / "manifest.json") || !fs::exists(test_dir / "manifest.json"))
        throw ConfigError("dataset needs train/ and test/ with manifests: " + data);

    auto train_set = load_dataset(train_dir.string());
    auto test_set = load_dataset(test_dir.string());
    if (!train_set.empty() && train_set.front().image.dim(0) != cfg.image_size)
        throw ConfigError("dataset image size does not match configuration");

    Classifier model(cfg.image_size, cfg.image_size);
    TrainReport rep = train(model, train_set, test_set, cfg.train_config());
    CheckpointMeta meta;
    meta.seed = cfg.seed;
    meta.train_accuracy = rep.train_accuracy;
    meta.test_accuracy = rep.test_accuracy;
    save_checkpoint(model, meta, out);
    std::printf("final loss %.4f  train accuracy %.4f  test accuracy %.4f\n",
                rep.epoch_loss.back(), rep.train_accuracy, rep.test_accuracy);
    std::printf("checkpoint written to %s\n", out.c_str());
    return 0;
}

int cmd_localize(const ConfigCli& cli, const std::string& checkpoint,
                 const std::string& data, const std::string& image,
                 const std::string& out, const std::string& label_filter, int limit,
                 bool force, bool trajectories) {
    RunConfig cfg = cli.resolve();
    if (data.empty() == image.empty())
        throw ConfigError("localize needs exactly one of --data or --image");
    Classifier model = load_checkpoint(checkpoint);
    if (model.input_h != cfg.image_size)
        throw ConfigError("checkpoint input size does not match configuration");

    struct Item {
        std::string stem;
        Tensor image;
    };
    std::vector<Item> items;
    if (!image.empty()) {
        items.push_back({image_stem(image), read_png_rgb(image)});
    } else {
        Manifest m = read_manifest(data);
        for (const ManifestEntry& e : m.entries) {
            if (label_filter != "any" && to_string(e.label) != label_filter) continue;
            items.push_back({image_stem(e.image),
                             read_png_rgb((fs::path(data) / e.image).string())});
            if (limit > 0 && int(items.size()) >= limit) break;
        }
    }
    if (items.empty()) throw ConfigError("no images selected for localization");

    fs::create_directories(out);
    std::mutex io_mu;
    int skipped = 0;
    parallel_for(int(items.size()), cfg.jobs, [&](int idx) {
        const Item& it = items[std::size_t(idx)];
        LocalizeOutcome o = localize_image(model, it.image, cfg, force);
        write_localize_artifacts((fs::path(out) / it.stem).string(), o, cfg, trajectories);
        std::lock_guard<std::mutex> g(io_mu);
        if (o.hier.skipped) {
            ++skipped;
            std::printf("warning: %s predicted normal, skipping localization (use --force to override)\n",
                        it.stem.c_str());
        } else {
            int kept = 0;
            for (const auto& d : o.selection.decisions) kept += d.kept;
            std::printf("%s: predicted %s%s, kept %d/%d patches\n", it.stem.c_str(),
                        o.hier.predicted_class == kClassDiseased ? "diseased" : "normal",
                        o.forced ? " (forced)" : "", kept, int(o.selection.decisions.size()));
        }
    });
    std::printf("localized %d image(s), %d skipped, artifacts in %s\n",
                int(items.size()) - skipped, skipped, out.c_str());
    return 0;
}

int cmd_evaluate(const ConfigCli& cli, const std::string& pred, const std::string& data,
                 const std::string& out, const std::string& baseline,
                 const std::string& checkpoint, int occlusion_grid) {
    RunConfig cfg = cli.resolve();
    Manifest m = read_manifest(data);

    struct Pair {
        std::string stem;
        Tensor gt;
        Tensor image;
    };
    std::vector<Pair> pairs;
    std::vector<std::string> missing;
    std::vector<EvalRow> rows;
    for (const ManifestEntry& e : m.entries) {
        if (e.label != Label::diseased) continue;
        std::string stem = image_stem(e.image);
        fs::path pdir = fs::path(pred) / stem;
        if (!fs::exists(pdir / "hierarchy.json")) {
            missing.push_back(stem);
            continue;
        }
        if (!fs::exists(pdir / "map.png")) continue;  // recorded skip, nothing to score
        Pair p;
        p.stem = stem;
        p.gt = read_png_binary((fs::path(data) / e.mask).string());
        p.image = read_png_rgb((fs::path(data) / e.image).string());
        pairs.push_back(std::move(p));
    }
    if (!missing.empty())
        throw ConfigError("prediction/dataset sets do not pair up; no prediction for: " +
                          missing.front() + (missing.size() > 1 ? " (and " +
                          std::to_string(missing.size() - 1) + " more)" : ""));
    // Predictions that match no dataset sample are an error too.
    for (const auto& entry : fs::directory_iterator(pred)) {
        if (!entry.is_directory()) continue;
        std::string stem = entry.path().filename().string();
        bool known = false;
        for (const ManifestEntry& e : m.entries)
            if (image_stem(e.image) == stem) { known = true; break; }
        if (!known)
            throw ConfigError("prediction " + stem + " matches no dataset sample");
    }
    if (pairs.empty()) throw ConfigError("nothing to evaluate");

    for (const Pair& p : pairs) {
        Tensor map = read_png_binary((fs::path(pred) / p.stem / "map.png").string());
        rows.push_back(evaluate_pair(p.stem, "hspi", map, map, p.gt));
    }

    nlohmann::json extra;
    if (!baseline.empty()) {
        if (baseline != "occlusion")
            throw ConfigError("unknown baseline: " + baseline);
        if (checkpoint.empty())
            throw ConfigError("--baseline occlusion requires --checkpoint");
        Classifier model = load_checkpoint(checkpoint);
        int grid = occlusion_grid > 0 ? occlusion_grid : cfg.schedule().grid_size(cfg.benchmark);
        std::vector<Tensor> sal(pairs.size());
        std::vector<Tensor> gts(pairs.size());
        parallel_for(int(pairs.size()), cfg.jobs, [&](int i) {
            sal[std::size_t(i)] = occlusion_saliency(model, pairs[std::size_t(i)].image, grid).saliency;
            gts[std::size_t(i)] = pairs[std::size_t(i)].gt;
        });
        SweepResult sweep = threshold_sweep(sal, gts);
        extra["occlusion_best_threshold"] = sweep.best_threshold;
        for (std::size_t i = 0; i < pairs.size(); ++i) {
            Tensor mask = binarize(sal[i], sweep.best_threshold);
            rows.push_back(evaluate_pair(pairs[i].stem, "occlusion", mask, sal[i], pairs[i].gt));
        }
    }

    fs::create_directories(out);
    write_report_csv((fs::path(out) / "report.csv").string(), rows);
    auto sums = summarize(rows);
    nlohmann::json sj = summary_to_json(sums);
    for (auto& [k, v] : extra.items()) sj[k] = v;
    std::ofstream os(fs::path(out) / "summary.json");
    os << sj.dump(2) << "\n";
    for (const MethodSummary& s : sums)
        std::printf("%-10s n=%d  F1 %.4f  PPV %.4f  SP %.4f  ASD %.3f  Proportion %.4f\n",
                    s.method.c_str(), s.images, s.f1, s.ppv, s.sp, s.asd_px, s.prop);
    return 0;
}

int cmd_render(const std::string& result, const std::string& image, const std::string& out) {
    std::ifstream hs(fs::path(result) / "hierarchy.json");
    if (!hs) throw Error("no hierarchy.json in " + result);
    nlohmann::json hj;
    hs >> hj;
    if (hj.value("skipped", false))
        throw Error("cannot render: localization was skipped for this image (predicted normal)");

    Tensor img = read_png_rgb(image);
    Tensor map = read_png_gray((fs::path(result) / "map.png").string());
    fs::create_directories(out);
    write_png_rgb((fs::path(out) / "overlay.png").string(), overlay_heatmap(img, map));

    // one panel per stage of the lowest size index that has trajectory dumps
    int stages = int(hj.at("sizes").at(0).at("stages").size());
    int size_index = -1;
    for (const auto& s : hj.at("sizes")) {
        char probe[64];
        std::snprintf(probe, sizeof probe, "traj_i%d_j01.csv", s.at("size_index").get<int>());
        if (fs::exists(fs::path(result) / probe)) {
            size_index = s.at("size_index").get<int>();
            break;
        }
    }
    if (size_index < 0)
        throw Error("no trajectory CSVs in " + result + " (rerun localize with --trajectories)");
    for (int j = 1; j <= stages; ++j) {
        char name[64];
        std::snprintf(name, sizeof name, "traj_i%d_j%02d.csv", size_index, j);
        auto records = read_trajectory_csv((fs::path(result) / name).string());
        int selected = 0;
        for (const auto& s : hj.at("sizes"))
            if (s.at("size_index").get<int>() == size_index)
                selected = s.at("stages").at(std::size_t(j - 1)).at("epoch").get<int>();
        char panel[64];
        std::snprintf(panel, sizeof panel, "panel_j%02d.png", j);
        write_png_rgb((fs::path(out) / panel).string(),
                      plot_stage_panel(records, selected));
    }
    std::printf("wrote overlay and %d stage panels to %s\n", stages, out.c_str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Hierarchical salient patch identification for disease localization"};
    app.require_subcommand(1);

    ConfigCli gen_cli, train_cli, loc_cli, eval_cli;

    auto* gen = app.add_subcommand("gen-data", "Generate a synthetic fundus dataset");
    std::string gen_out;
    bool gen_force = false;
    gen->add_option("--out", gen_out, "Output dataset directory")->required();
    gen->add_flag("--force", gen_force, "Write into a non-empty directory");
    gen_cli.attach(gen);

    auto* tr = app.add_subcommand("train", "Train the classifier on a dataset");
    std::string tr_data, tr_out = "classifier.hspc";
    tr->add_option("--data", tr_data, "Dataset directory (train/ + test/)")->required();
    tr->add_option("--out", tr_out, "Checkpoint output path");
    train_cli.attach(tr);

    auto* loc = app.add_subcommand("localize", "Run hierarchical localization");
    std::string loc_ckpt, loc_data, loc_image, loc_out = "localize_out", loc_label = "any";
    int loc_limit = 0;
    bool loc_force = false, loc_traj = false;
    loc->add_option("--checkpoint", loc_ckpt, "Trained classifier checkpoint")->required();
    loc->add_option("--data", loc_data, "Dataset directory to localize");
    loc->add_option("--image", loc_image, "Single image instead of a dataset");
    loc->add_option("--out", loc_out, "Artifact output directory");
    loc->add_option("--label", loc_label, "Filter dataset samples by label: any|normal|diseased");
    loc->add_option("--limit", loc_limit, "Stop after this many images (0 = all)");
    loc->add_flag("--force", loc_force, "Localize even when the model predicts normal");
    loc->add_flag("--trajectories", loc_traj, "Dump trajectory CSVs for every size");
    loc_cli.attach(loc);

    auto* ev = app.add_subcommand("evaluate", "Score predictions against ground truth");
    std::string ev_pred, ev_data, ev_out = "eval_out", ev_baseline, ev_ckpt;
    int ev_grid = 0;
    ev->add_option("--pred", ev_pred, "Localization artifact directory")->required();
    ev->add_option("--data", ev_data, "Dataset directory with ground truth")->required();
    ev->add_option("--out", ev_out, "Report output directory");
    ev->add_option("--baseline", ev_baseline, "Also evaluate a baseline: occlusion");
    ev->add_option("--checkpoint", ev_ckpt, "Checkpoint for the baseline");
    ev->add_option("--occlusion-grid", ev_grid, "Occlusion grid size (default: benchmark grid)");
    eval_cli.attach(ev);

    auto* rd = app.add_subcommand("render", "Render overlay and stage panels");
    std::string rd_result, rd_image, rd_out = "render_out";
    rd->add_option("--result", rd_result, "Per-image localization artifact directory")->required();
    rd->add_option("--image", rd_image, "Original input image")->required();
    rd->add_option("--out", rd_out, "Output directory");

    try {
        app.parse(argc, argv);
        if (gen->parsed()) return cmd_gen_data(gen_cli, gen_out, gen_force);
        if (tr->parsed()) return cmd_train(train_cli, tr_data, tr_out);
        if (loc->parsed())
            return cmd_localize(loc_cli, loc_ckpt, loc_data, loc_image, loc_out, loc_label,
                                loc_limit, loc_force, loc_traj);
        if (ev->parsed())
            return cmd_evaluate(eval_cli, ev_pred, ev_data, ev_out, ev_baseline, ev_ckpt,
                                ev_grid);
        if (rd->parsed()) return cmd_render(rd_result, rd_image, rd_out);
        return 2;
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << e.what() << "\n";
        return 2;
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
}
