// Command-line pipeline: synthetic data generation, dataset statistics,
// training, cross-validation, inference, evaluation and watershed
// post-processing.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>

#include "tubeseg/kernels.hpp"
#include "tubeseg/losses.hpp"
#include "tubeseg/metrics.hpp"
#include "tubeseg/postprocess.hpp"
#include "tubeseg/synth.hpp"
#include "tubeseg/trainer.hpp"

namespace fs = std::filesystem;
using namespace tubeseg;

namespace {

struct CommonTrainArgs {
    std::string manifest;
    std::string out_dir = "runs/out";
    std::string stats_arg = "dataset";  // dataset | canonical | path to stats file
    std::string precision = "f32";
    std::string loss = "tversky";
    std::string augment = "low";
    std::string tta = "on";
    std::string block = "residual";
    bool paper_scale = false;
    TrainConfig cfg = TrainConfig::desk();
    CLI::Option* decay_epoch_opt = nullptr;
};

void add_train_options(CLI::App* cmd, CommonTrainArgs& args) {
    cmd->add_option("--manifest", args.manifest, "dataset manifest (TSV)")->required();
    cmd->add_option("--out", args.out_dir, "output directory");
    cmd->add_option("--epochs", args.cfg.epochs, "training epochs");
    cmd->add_option("--lr", args.cfg.lr, "learning rate");
    args.decay_epoch_opt =
        cmd->add_option("--decay-epoch", args.cfg.lr_decay_epoch,
                        "epoch at which lr is decayed (default: half the epochs)");
    cmd->add_option("--decay-factor", args.cfg.lr_decay_factor, "lr decay factor");
    cmd->add_option("--batch", args.cfg.train_batch, "train batch size");
    cmd->add_option("--val-batch", args.cfg.val_batch, "validation batch size");
    cmd->add_option("--loss", args.loss, "loss function")
        ->check(CLI::IsMember({"dice_wce", "tversky"}));
    cmd->add_option("--tversky-alpha", args.cfg.tversky_alpha, "Tversky alpha");
    cmd->add_option("--tversky-beta", args.cfg.tversky_beta, "Tversky beta");
    cmd->add_option("--augment", args.augment, "augmentation preset")
        ->check(CLI::IsMember({"none", "low", "high"}));
    cmd->add_option("--tta", args.tta, "test-time augmentation")
        ->check(CLI::IsMember({"on", "off"}));
    cmd->add_option("--num-classes", args.cfg.network.num_classes, "2 or 3 classes");
    cmd->add_option("--base-width", args.cfg.network.base_width, "encoder stage-1 width");
    cmd->add_option("--se-reduction", args.cfg.network.se_reduction, "attention reduction ratio");
    cmd->add_option("--block", args.block, "encoder block kind")
        ->check(CLI::IsMember({"residual", "bottleneck"}));
    cmd->add_option("--seed", args.cfg.seed, "master seed");
    cmd->add_option("--early-stop-f", args.cfg.early_stop_fscore,
                    "stop when validation F-score reaches this value");
    cmd->add_option("--min-distance", args.cfg.split_min_distance,
                    "auto-seed suppression radius for instance splitting");
    cmd->add_option("--stats", args.stats_arg,
                    "normalization stats: 'dataset', 'canonical' or a stats file");
    cmd->add_option("--precision", args.precision, "training precision")
        ->check(CLI::IsMember({"f32", "f64"}));
    cmd->add_flag("--paper-scale", args.paper_scale,
                  "full-size profile: base width 64, depths 3/4/6/3, 60 epochs");
}

void finalize_train_config(CommonTrainArgs& args) {
    args.cfg.loss = args.loss == "dice_wce" ? LossKind::dice_wce : LossKind::tversky;
    args.cfg.augment = args.augment == "none"  ? AugmentationConfig::Preset::none
                       : args.augment == "high" ? AugmentationConfig::Preset::high
                                                 : AugmentationConfig::Preset::low;
    args.cfg.tta = args.tta == "on";
    args.cfg.network.block_kind =
        args.block == "bottleneck" ? BlockKind::bottleneck : BlockKind::residual;
    if (args.paper_scale) {
        args.cfg.network.base_width = 64;
        args.cfg.network.stage_depths = {3, 4, 6, 3};
        args.cfg.epochs = 60;
        args.cfg.lr_decay_epoch = 30;
    }
    if (args.decay_epoch_opt && args.decay_epoch_opt->count() == 0 && !args.paper_scale)
        args.cfg.lr_decay_epoch = std::max(1, args.cfg.epochs / 2);
}

NormalizationStats resolve_stats(const std::string& arg, const std::vector<Sample>& train) {
    if (arg == "dataset") return stats_from_samples(train);
    if (arg == "canonical") return canonical_pretraining_stats();
    return read_stats_file(arg);
}

ImageU8 overlay_boundaries(const ImageU8& image, const InstanceMap& instances) {
    ImageU8 out = image;
    const LabelMask edges = instance_boundaries(instances);
    for (int y = 0; y < out.height; ++y)
        for (int x = 0; x < out.width; ++x)
            if (edges.at(x, y)) {
                out.at(x, y, 0) = 255;
                out.at(x, y, 1) = 0;
                out.at(x, y, 2) = 0;
            }
    return out;
}

int round_to_32(int v) {
    const int nearest = ((v + 16) / 32) * 32;
    return std::max(32, nearest);
}

// ---- subcommand implementations ----

int cmd_generate(const std::string& out_dir, int count, std::uint64_t seed, int width, int height,
                 const std::string& palette, double touching, int tubules_min, int tubules_max,
                 const std::string& split_tag) {
    SceneSpec spec;
    spec.width = width;
    spec.height = height;
    spec.touching_prob = touching;
    spec.count_min = tubules_min;
    spec.count_max = tubules_max;
    spec.palette = palette == "he" ? he_like_palette() : pas_like_palette();
    fs::create_directories(out_dir);
    DatasetManifest manifest;
    for (int i = 0; i < count; ++i) {
        const SceneData scene = generate_scene(spec, mix_seed(seed, 0x1Du, i));
        char stem[32];
        std::snprintf(stem, sizeof stem, "%04d", i);
        ManifestRecord rec;
        rec.image = out_dir + "/" + stem + "_image.png";
        rec.mask2 = out_dir + "/" + stem + "_mask2.png";
        rec.mask3 = out_dir + "/" + stem + "_mask3.png";
        rec.instances = out_dir + "/" + stem + "_instances.png";
        rec.split = split_tag;
        write_image(rec.image, scene.image);
        write_mask(rec.mask2, scene.mask2);
        write_mask(rec.mask3, scene.mask3);
        write_instance_map(rec.instances, scene.instances);
        manifest.push_back(std::move(rec));
    }
    const std::string manifest_path = out_dir + "/manifest.tsv";
    write_manifest(manifest_path, manifest);
    std::cout << "wrote " << count << " records to " << manifest_path << "\n";
    return 0;
}

int cmd_stats(const std::string& manifest_path, const std::string& out_path) {
    const DatasetManifest manifest = read_manifest(manifest_path);
    StatsAccumulator acc;
    for (const auto& rec : manifest) acc.add(read_image(rec.image));
    const NormalizationStats stats = acc.finalize();
    write_stats_file(out_path, stats);
    std::cout << "wrote " << out_path << "\n";
    return 0;
}

template <typename T>
int run_train(CommonTrainArgs& args, int fold, int folds) {
    const DatasetManifest manifest = read_manifest(args.manifest);
    std::vector<Sample> all = load_samples(manifest, args.cfg.network.num_classes, true);
    std::vector<Sample> train, val;
    if (fold >= 0) {
        if (fold >= folds) throw std::runtime_error("--fold must be < --folds");
        const FoldSplit split = kfold_split(all.size(), folds, args.cfg.seed);
        for (auto i : split.complement_indices(fold)) train.push_back(all[i]);
        for (auto i : split.fold_indices(fold)) val.push_back(all[i]);
    } else {
        train = all;
        val = all;  // overfit-style run: validate on the training set
    }

    TrainSession<T> session(args.cfg, resolve_stats(args.stats_arg, train));
    fs::create_directories(args.out_dir);
    std::ofstream log(args.out_dir + "/log.csv");
    const TrainResult result =
        session.run(train, val, &log, args.out_dir + "/best.ckpt");
    session.save_checkpoint(args.out_dir + "/final.ckpt");
    std::cout << "trained " << session.completed_epochs() << " epochs; best val F-score "
              << result.best_fscore << " at epoch " << result.best_epoch << "\n"
              << "checkpoints in " << args.out_dir << "\n";
    return 0;
}

template <typename T>
int run_cross_validate(CommonTrainArgs& args, int folds, int jobs) {
    const DatasetManifest manifest = read_manifest(args.manifest);
    std::vector<Sample> all = load_samples(manifest, args.cfg.network.num_classes, true);
    const CvOutcome outcome = cross_validate<T>(all, args.cfg, folds, jobs, args.out_dir);
    fs::create_directories(args.out_dir);
    {
        std::ostringstream csv;
        write_metrics_csv(csv, outcome.report);
        atomic_write_text(args.out_dir + "/metrics.csv", csv.str());
    }
    std::cout << "cross-validation (" << folds << " folds):\n";
    for (const auto& f : outcome.report.folds) {
        std::printf("  fold %d: IoU %.4f  F %.4f  AJI %.4f\n", f.fold, f.iou, f.fscore, f.aji);
    }
    std::printf("  mean: IoU %.4f ± %.4f  F %.4f ± %.4f  AJI %.4f ± %.4f  (95%% CI)\n",
                outcome.report.iou_agg.mean, outcome.report.iou_agg.ci95_halfwidth,
                outcome.report.fscore_agg.mean, outcome.report.fscore_agg.ci95_halfwidth,
                outcome.report.aji_agg.mean, outcome.report.aji_agg.ci95_halfwidth);
    std::cout << "metrics CSV: " << args.out_dir << "/metrics.csv\n";
    return 0;
}

template <typename T>
int run_infer(const std::string& checkpoint, const std::string& input, const std::string& out_dir,
              const std::string& tta_arg, const std::string& seeds_file, bool auto_seeds_flag,
              double min_distance) {
    TrainSession<T> session = TrainSession<T>::load_checkpoint(checkpoint);
    bool use_tta = session.config().tta;
    if (tta_arg == "on") use_tta = true;
    if (tta_arg == "off") use_tta = false;

    std::vector<std::string> inputs;
    if (fs::is_directory(input)) {
        for (const auto& e : fs::directory_iterator(input))
            if (e.path().extension() == ".png") inputs.push_back(e.path().string());
        std::sort(inputs.begin(), inputs.end());
    } else {
        inputs.push_back(input);
    }
    if (inputs.empty()) throw std::runtime_error("no input images found under " + input);

    std::optional<std::vector<Seed>> seeds;
    if (!seeds_file.empty()) seeds = read_seeds_file(seeds_file);

    fs::create_directories(out_dir);
    DatasetManifest pred_manifest;
    for (const std::string& path : inputs) {
        ImageU8 image = read_image(path);
        const int w0 = image.width, h0 = image.height;
        ImageU8 net_input = image;
        if (w0 % 32 != 0 || h0 % 32 != 0) {
            const int nw = round_to_32(w0), nh = round_to_32(h0);
            std::cerr << "warning: " << path << " is " << w0 << "x" << h0
                      << ", not divisible by 32; resizing to " << nw << "x" << nh << "\n";
            net_input = resize_nearest(image, nw, nh);
        }
        const ProbMap probs = session.predict(net_input, use_tta);
        LabelMask mask = argmax_mask(probs);
        if (mask.width != w0 || mask.height != h0) mask = resize_nearest(mask, w0, h0);

        SplitOptions opts;
        opts.min_distance = min_distance;
        opts.num_classes = session.config().network.num_classes;
        (void)auto_seeds_flag;  // auto seeding is the default when no file is given
        const InstanceMap instances = split_touching(mask, seeds ? &*seeds : nullptr, opts);

        const std::string stem = fs::path(path).stem().string();
        ManifestRecord rec;
        rec.image = path;
        rec.mask2 = out_dir + "/" + stem + "_mask.png";
        rec.mask3 = session.config().network.num_classes == 3 ? rec.mask2 : "";
        rec.instances = out_dir + "/" + stem + "_instances.png";
        rec.split = "prediction";
        write_mask(rec.mask2, mask);
        write_instance_map(rec.instances, instances);
        write_image(out_dir + "/" + stem + "_overlay.png", overlay_boundaries(image, instances));
        pred_manifest.push_back(std::move(rec));
        std::cout << path << " -> " << instances.count << " instances\n";
    }
    write_manifest(out_dir + "/predictions.tsv", pred_manifest);
    return 0;
}

int cmd_eval(const std::string& pred_path, const std::string& gt_path, const std::string& out_path,
             int num_classes) {
    const DatasetManifest pred = read_manifest(pred_path);
    const DatasetManifest gt = read_manifest(gt_path);
    if (pred.size() != gt.size())
        throw std::runtime_error("prediction and ground-truth manifests differ in length");
    std::vector<ImageMetricsRow> rows;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const LabelMask pm = read_mask(num_classes == 3 ? pred[i].mask3 : pred[i].mask2);
        const LabelMask gm = read_mask(num_classes == 3 ? gt[i].mask3 : gt[i].mask2);
        ImageMetricsRow row;
        row.image = fs::path(gt[i].image).filename().string();
        row.fold = 0;
        const ConfusionCounts counts = confusion_counts(pm, gm, num_classes);
        row.iou = iou(counts, 1);
        row.fscore = f_score(counts, 1);
        if (!pred[i].instances.empty() && !gt[i].instances.empty())
            row.aji = aji(read_instance_map(gt[i].instances), read_instance_map(pred[i].instances));
        rows.push_back(std::move(row));
    }
    const MetricsReport report = MetricsReport::from_rows(std::move(rows));
    std::ostringstream csv;
    write_metrics_csv(csv, report);
    atomic_write_text(out_path, csv.str());
    std::cout << "wrote " << out_path << "\n";
    return 0;
}

int cmd_postprocess(const std::string& mask_path, const std::string& out_path,
                    const std::string& seeds_file, double min_distance, int num_classes) {
    const LabelMask mask = read_mask(mask_path);
    std::optional<std::vector<Seed>> seeds;
    if (!seeds_file.empty()) seeds = read_seeds_file(seeds_file);
    SplitOptions opts;
    opts.min_distance = min_distance;
    opts.num_classes = num_classes;
    const InstanceMap instances = split_touching(mask, seeds ? &*seeds : nullptr, opts);
    write_instance_map(out_path, instances);
    std::cout << instances.count << " instances -> " << out_path << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Seminiferous-tubule epithelium segmentation pipeline"};
    app.require_subcommand(1);
    app.set_config("--config", "", "flat key=value config file");

    // generate
    std::string gen_out = "data", gen_palette = "pas", gen_split = "all";
    int gen_count = 40, gen_w = 128, gen_h = 128, gen_tmin = 2, gen_tmax = 5;
    std::uint64_t gen_seed = 0;
    double gen_touching = 0.3;
    auto* gen = app.add_subcommand("generate", "generate a synthetic dataset");
    gen->add_option("--out", gen_out, "output directory");
    gen->add_option("--count", gen_count, "number of images");
    gen->add_option("--seed", gen_seed, "generation seed");
    gen->add_option("--width", gen_w);
    gen->add_option("--height", gen_h);
    gen->add_option("--palette", gen_palette)->check(CLI::IsMember({"pas", "he"}));
    gen->add_option("--touching", gen_touching, "touching-pair probability");
    gen->add_option("--tubules-min", gen_tmin);
    gen->add_option("--tubules-max", gen_tmax);
    gen->add_option("--split", gen_split, "split tag stored in the manifest");

    // stats
    std::string stats_manifest, stats_out = "stats.json";
    auto* stats_cmd = app.add_subcommand("stats", "compute dataset normalization statistics");
    stats_cmd->add_option("--manifest", stats_manifest)->required();
    stats_cmd->add_option("--out", stats_out);

    // train
    CommonTrainArgs train_args;
    int train_fold = -1, train_folds = 5;
    auto* train_cmd = app.add_subcommand("train", "train one model");
    add_train_options(train_cmd, train_args);
    train_cmd->add_option("--fold", train_fold, "held-out fold (-1 trains on all records)");
    train_cmd->add_option("--folds", train_folds, "fold count used with --fold");

    // cross-validate
    CommonTrainArgs cv_args;
    int cv_folds = 5, cv_jobs = 1;
    auto* cv_cmd = app.add_subcommand("cross-validate", "k-fold cross-validation");
    add_train_options(cv_cmd, cv_args);
    cv_cmd->add_option("--folds", cv_folds);
    cv_cmd->add_option("--jobs", cv_jobs, "parallel fold workers");

    // infer
    std::string infer_ckpt, infer_input, infer_out = "predictions", infer_tta = "default";
    std::string infer_seeds;
    bool infer_auto_seeds = false;
    double infer_min_distance = 8.0;
    std::string infer_precision = "f32";
    auto* infer_cmd = app.add_subcommand("infer", "segment images with a trained checkpoint");
    infer_cmd->add_option("--checkpoint", infer_ckpt)->required();
    infer_cmd->add_option("--input", infer_input, "image file or directory")->required();
    infer_cmd->add_option("--out", infer_out);
    infer_cmd->add_option("--tta", infer_tta)->check(CLI::IsMember({"on", "off", "default"}));
    infer_cmd->add_option("--seeds", infer_seeds, "manual watershed seeds file (x y per line)");
    infer_cmd->add_flag("--auto-seeds", infer_auto_seeds, "derive watershed seeds automatically");
    infer_cmd->add_option("--min-distance", infer_min_distance);
    infer_cmd->add_option("--precision", infer_precision)->check(CLI::IsMember({"f32", "f64"}));

    // eval
    std::string eval_pred, eval_gt, eval_out = "metrics.csv";
    int eval_classes = 2;
    auto* eval_cmd = app.add_subcommand("eval", "metrics CSV from prediction/gt manifest pairs");
    eval_cmd->add_option("--pred", eval_pred)->required();
    eval_cmd->add_option("--gt", eval_gt)->required();
    eval_cmd->add_option("--out", eval_out);
    eval_cmd->add_option("--num-classes", eval_classes);

    // postprocess
    std::string pp_mask, pp_out = "instances.png", pp_seeds;
    bool pp_auto = false;
    double pp_min_distance = 8.0;
    int pp_classes = 2;
    auto* pp_cmd = app.add_subcommand("postprocess", "split touching instances in a class mask");
    pp_cmd->add_option("--mask", pp_mask)->required();
    pp_cmd->add_option("--out", pp_out);
    pp_cmd->add_option("--seeds", pp_seeds);
    pp_cmd->add_flag("--auto-seeds", pp_auto);
    pp_cmd->add_option("--min-distance", pp_min_distance);
    pp_cmd->add_option("--num-classes", pp_classes);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (*gen)
            return cmd_generate(gen_out, gen_count, gen_seed, gen_w, gen_h, gen_palette,
                                gen_touching, gen_tmin, gen_tmax, gen_split);
        if (*stats_cmd) return cmd_stats(stats_manifest, stats_out);
        if (*train_cmd) {
            finalize_train_config(train_args);
            return train_args.precision == "f64"
                       ? run_train<double>(train_args, train_fold, train_folds)
                       : run_train<float>(train_args, train_fold, train_folds);
        }
        if (*cv_cmd) {
            finalize_train_config(cv_args);
            return cv_args.precision == "f64" ? run_cross_validate<double>(cv_args, cv_folds, cv_jobs)
                                              : run_cross_validate<float>(cv_args, cv_folds, cv_jobs);
        }
        if (*infer_cmd)
            return infer_precision == "f64"
                       ? run_infer<double>(infer_ckpt, infer_input, infer_out, infer_tta,
                                           infer_seeds, infer_auto_seeds, infer_min_distance)
                       : run_infer<float>(infer_ckpt, infer_input, infer_out, infer_tta,
                                          infer_seeds, infer_auto_seeds, infer_min_distance);
        if (*eval_cmd) return cmd_eval(eval_pred, eval_gt, eval_out, eval_classes);
        if (*pp_cmd) return cmd_postprocess(pp_mask, pp_out, pp_seeds, pp_min_distance, pp_classes);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
