#include "tubeseg/trainer.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "tubeseg/losses.hpp"
#include "tubeseg/rng.hpp"

namespace tubeseg {

namespace {

// Seed-derivation tags.
constexpr std::uint64_t kTagShuffle = 0x5F;
constexpr std::uint64_t kTagAugment = 0xA6;
constexpr std::uint64_t kTagFold = 0xF0;

}  // namespace

void TrainConfig::validate() const {
    if (epochs < 1) throw std::invalid_argument("epochs must be >= 1");
    if (lr_decay_epoch > epochs)
        throw std::invalid_argument("lr decay epoch must be <= epochs");
    if (lr_decay_epoch < 1) throw std::invalid_argument("lr decay epoch must be >= 1");
    if (train_batch < 1 || val_batch < 1) throw std::invalid_argument("batch sizes must be >= 1");
    if (lr < 0.0) throw std::invalid_argument("learning rate must be non-negative");
    network.validate();
}

TrainConfig TrainConfig::desk() {
    TrainConfig c;
    c.epochs = 30;
    c.lr_decay_epoch = 15;
    c.network = NetworkConfig::desk();
    return c;
}

NormalizationStats stats_from_samples(const std::vector<Sample>& samples) {
    StatsAccumulator acc;
    for (const auto& s : samples) acc.add(s.image);
    return acc.finalize();
}

std::vector<Sample> load_samples(const DatasetManifest& manifest, int num_classes,
                                 bool with_instances) {
    std::vector<Sample> samples;
    samples.reserve(manifest.size());
    for (const auto& rec : manifest) {
        Sample s;
        s.name = std::filesystem::path(rec.image).filename().string();
        s.image = read_image(rec.image);
        s.mask = read_mask(num_classes == 3 ? rec.mask3 : rec.mask2);
        require_same_extent(s.image.width, s.image.height, s.mask.width, s.mask.height,
                            "manifest record " + rec.image);
        if (with_instances && !rec.instances.empty()) {
            s.gt_instances = read_instance_map(rec.instances);
            require_same_extent(s.image.width, s.image.height, s.gt_instances.width,
                                s.gt_instances.height, "manifest record " + rec.image);
        }
        samples.push_back(std::move(s));
    }
    return samples;
}

// ---- Adam ----

template <typename T>
void Adam<T>::ensure_slots(const ParameterStore<T>& params) {
    if (!slots_.empty()) return;
    for (const auto& e : params.entries())
        if (e.trainable)
            slots_.push_back(Slot{e.name, std::vector<T>(e.tensor.numel(), T(0)),
                                  std::vector<T>(e.tensor.numel(), T(0))});
}

template <typename T>
void Adam<T>::step(ParameterStore<T>& params, double lr) {
    ensure_slots(params);
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, double(t_));
    const double bc2 = 1.0 - std::pow(beta2_, double(t_));
    std::size_t slot_idx = 0;
    for (auto& e : params.entries()) {
        if (!e.trainable) continue;
        Slot& slot = slots_[slot_idx++];
        if (slot.name != e.name)
            throw std::runtime_error("optimizer state does not match parameter order at " + e.name);
        auto values = e.tensor.values_mut();
        const bool has_grad = e.tensor.has_grad();
        auto grad = e.tensor.grad();
        for (std::size_t i = 0; i < values.size(); ++i) {
            const double g = has_grad ? double(grad[i]) : 0.0;
            const double m = beta1_ * double(slot.m[i]) + (1.0 - beta1_) * g;
            const double v = beta2_ * double(slot.v[i]) + (1.0 - beta2_) * g * g;
            slot.m[i] = static_cast<T>(m);
            slot.v[i] = static_cast<T>(v);
            const double mhat = m / bc1;
            const double vhat = v / bc2;
            values[i] = static_cast<T>(double(values[i]) - lr * mhat / (std::sqrt(vhat) + eps_));
        }
    }
}

// ---- training session ----

template <typename T>
TrainSession<T>::TrainSession(TrainConfig cfg, NormalizationStats stats)
    : cfg_(std::move(cfg)), stats_(std::move(stats)) {
    cfg_.validate();
    net_ = std::make_unique<Network<T>>(cfg_.network, cfg_.seed);
}

template <typename T>
double TrainSession<T>::lr_for_epoch(int epoch) const {
    return epoch >= cfg_.lr_decay_epoch ? cfg_.lr * cfg_.lr_decay_factor : cfg_.lr;
}

namespace {

template <typename T>
std::vector<T> weights_from_masks(const std::vector<const LabelMask*>& masks, int num_classes) {
    std::vector<std::int64_t> counts(num_classes, 0);
    for (const LabelMask* m : masks) {
        const auto c = label_pixel_counts(std::span<const std::uint8_t>(m->ids), num_classes);
        for (int i = 0; i < num_classes; ++i) counts[i] += c[i];
    }
    return class_weights<T>(counts);
}

}  // namespace

template <typename T>
EpochLog TrainSession<T>::run_epoch(const std::vector<Sample>& train,
                                    const std::vector<Sample>& val) {
    if (train.empty()) throw std::invalid_argument("run_epoch: empty training set");
    const int epoch = completed_epochs_ + 1;
    const double lr = lr_for_epoch(epoch);
    const int num_classes = cfg_.network.num_classes;
    const int height = train[0].image.height, width = train[0].image.width;
    for (const Sample& s : train)
        require_same_extent(width, height, s.image.width, s.image.height,
                            "batch assembly (fixed-size images)");

    if (cfg_.weights_mode == WeightsMode::dataset && !dataset_weights_ready_) {
        std::vector<const LabelMask*> masks;
        for (const Sample& s : train) masks.push_back(&s.mask);
        dataset_weights_ = weights_from_masks<T>(masks, num_classes);
        dataset_weights_ready_ = true;
    }

    std::vector<std::size_t> order(train.size());
    std::iota(order.begin(), order.end(), 0);
    Rng shuffle_rng(mix_seed(cfg_.seed, kTagShuffle, static_cast<std::uint64_t>(epoch)));
    for (std::size_t i = order.size() - 1; i > 0; --i) {
        const auto j =
            static_cast<std::size_t>(shuffle_rng.uniform_int(0, static_cast<std::int64_t>(i)));
        std::swap(order[i], order[j]);
    }

    const AugmentationConfig aug = AugmentationConfig::from_preset(cfg_.augment);
    double loss_sum = 0.0;
    std::int64_t loss_samples = 0;
    int batch_index = 0;

    for (std::size_t start = 0; start < order.size(); start += cfg_.train_batch, ++batch_index) {
        const std::size_t bsz = std::min<std::size_t>(cfg_.train_batch, order.size() - start);
        Tensor<T> input(Shape{static_cast<std::int64_t>(bsz), 3, height, width});
        std::vector<std::uint8_t> labels(bsz * static_cast<std::size_t>(height) * width);
        for (std::size_t b = 0; b < bsz; ++b) {
            const Sample& s = train[order[start + b]];
            ImageU8 image = s.image;
            LabelMask mask = s.mask;
            apply_pipeline(image, mask, aug,
                           mix_seed(cfg_.seed, kTagAugment, static_cast<std::uint64_t>(epoch),
                                    static_cast<std::uint64_t>(order[start + b])));
            normalize_into(image, stats_, input, static_cast<std::int64_t>(b));
            std::copy(mask.ids.begin(), mask.ids.end(),
                      labels.begin() + b * mask.ids.size());
        }

        std::vector<T> weights;
        if (cfg_.loss == LossKind::dice_wce) {
            if (cfg_.weights_mode == WeightsMode::dataset) {
                weights = dataset_weights_;
            } else {
                const auto counts = label_pixel_counts(labels, num_classes);
                weights = class_weights<T>(counts);
            }
        }

        GradientTape<T> tape;
        Tensor<T> logits = net_->forward(input, true);
        Tensor<T> probs = softmax_channels(logits);
        Tensor<T> onehot = onehot_target<T>(labels, num_classes,
                                            static_cast<std::int64_t>(bsz), height, width);
        Tensor<T> loss = cfg_.loss == LossKind::dice_wce
                             ? dice_wce(probs, onehot, weights)
                             : tversky(probs, onehot, static_cast<T>(cfg_.tversky_alpha),
                                       static_cast<T>(cfg_.tversky_beta),
                                       cfg_.tversky_paper_prefactor);
        const double loss_value = double(loss.item());
        if (!std::isfinite(loss_value))
            throw std::runtime_error("non-finite training loss at epoch " + std::to_string(epoch) +
                                     ", batch " + std::to_string(batch_index) + ": " +
                                     std::to_string(loss_value));
        tape.backward(loss);
        opt_.step(net_->params(), lr);
        net_->params().zero_grads();
        loss_sum += loss_value * double(bsz);
        loss_samples += static_cast<std::int64_t>(bsz);
    }

    EpochLog log;
    log.epoch = epoch;
    log.lr = lr;
    log.train_loss = loss_sum / double(loss_samples);

    if (!val.empty()) {
        // Aggregate pixel confusion over the held-out images; the epithelium
        // class (1) is the reported one. Per-epoch validation skips TTA.
        std::int64_t tp = 0, fp = 0, fn = 0;
        for (const Sample& s : val) {
            const ProbMap probs = predict(s.image, false);
            const LabelMask pred = argmax_mask(probs);
            const ConfusionCounts c = confusion_counts(pred, s.mask, num_classes);
            tp += c.tp[1];
            fp += c.fp[1];
            fn += c.fn[1];
        }
        log.val_iou = tp + fp + fn == 0 ? 1.0 : double(tp) / double(tp + fp + fn);
        log.val_fscore = 2 * tp + fp + fn == 0 ? 1.0 : 2.0 * double(tp) / double(2 * tp + fp + fn);
    }

    completed_epochs_ = epoch;
    return log;
}

template <typename T>
TrainResult TrainSession<T>::run(const std::vector<Sample>& train, const std::vector<Sample>& val,
                                 std::ostream* log_csv, const std::string& best_path) {
    TrainResult result;
    if (log_csv) *log_csv << "epoch,lr,train_loss,val_iou,val_fscore\n";
    while (completed_epochs_ < cfg_.epochs) {
        EpochLog log = run_epoch(train, val);
        result.log.push_back(log);
        if (log_csv) {
            char buf[160];
            std::snprintf(buf, sizeof buf, "%d,%.10g,%.10g,%.6f,%.6f\n", log.epoch, log.lr,
                          log.train_loss, log.val_iou, log.val_fscore);
            *log_csv << buf;
        }
        if (log.val_fscore > best_fscore_) {
            best_fscore_ = log.val_fscore;
            best_epoch_ = log.epoch;
            if (!best_path.empty()) save_checkpoint(best_path);
        }
        if (cfg_.early_stop_fscore > 0.0 && log.val_fscore >= cfg_.early_stop_fscore) {
            result.early_stopped = true;
            break;
        }
    }
    result.best_epoch = best_epoch_;
    result.best_fscore = best_fscore_;
    return result;
}

template <typename T>
ProbMap TrainSession<T>::predict(const ImageU8& image, bool use_tta) {
    auto forward_one = [this](const ImageU8& img) -> ProbMap {
        Tensor<T> x = normalize<T>(img, stats_);
        Tensor<T> logits = net_->forward(x, false);
        Tensor<T> probs = softmax_channels(logits);
        ProbMap out(cfg_.network.num_classes, img.height, img.width);
        auto v = probs.values();
        for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] = static_cast<float>(v[i]);
        return out;
    };
    return use_tta ? tta_predict(image, forward_one) : forward_one(image);
}

void write_train_log_csv(std::ostream& os, const std::vector<EpochLog>& log) {
    os << "epoch,lr,train_loss,val_iou,val_fscore\n";
    for (const auto& e : log) {
        char buf[160];
        std::snprintf(buf, sizeof buf, "%d,%.10g,%.10g,%.6f,%.6f\n", e.epoch, e.lr, e.train_loss,
                      e.val_iou, e.val_fscore);
        os << buf;
    }
}

// ---- checkpoint ----

namespace {

const char* loss_name(LossKind k) { return k == LossKind::dice_wce ? "dice_wce" : "tversky"; }
LossKind loss_from_name(const std::string& s) {
    if (s == "dice_wce") return LossKind::dice_wce;
    if (s == "tversky") return LossKind::tversky;
    throw std::runtime_error("unknown loss kind in checkpoint: " + s);
}

const char* augment_name(AugmentationConfig::Preset p) {
    switch (p) {
        case AugmentationConfig::Preset::none: return "none";
        case AugmentationConfig::Preset::low: return "low";
        case AugmentationConfig::Preset::high: return "high";
    }
    return "none";
}

AugmentationConfig::Preset augment_from_name(const std::string& s) {
    if (s == "none") return AugmentationConfig::Preset::none;
    if (s == "low") return AugmentationConfig::Preset::low;
    if (s == "high") return AugmentationConfig::Preset::high;
    throw std::runtime_error("unknown augmentation preset in checkpoint: " + s);
}

std::string fmt_double(double v) {
    char buf[48];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace

template <typename T>
void TrainSession<T>::save_checkpoint(const std::string& path) const {
    std::ostringstream header;
    header << "tubeseg-checkpoint 1\n";
    header << "epoch " << completed_epochs_ << '\n';
    header << "adam_step " << opt_.step_count() << '\n';
    header << "master_seed " << cfg_.seed << '\n';
    header << "best_fscore " << fmt_double(best_fscore_) << '\n';
    header << "best_epoch " << best_epoch_ << '\n';
    header << "stats_mean " << fmt_double(stats_.mean[0]) << ' ' << fmt_double(stats_.mean[1])
           << ' ' << fmt_double(stats_.mean[2]) << '\n';
    header << "stats_std " << fmt_double(stats_.stddev[0]) << ' ' << fmt_double(stats_.stddev[1])
           << ' ' << fmt_double(stats_.stddev[2]) << '\n';
    header << "stats_source " << (stats_.source.empty() ? "dataset" : stats_.source) << '\n';
    header << "cfg.epochs " << cfg_.epochs << '\n';
    header << "cfg.lr " << fmt_double(cfg_.lr) << '\n';
    header << "cfg.lr_decay_factor " << fmt_double(cfg_.lr_decay_factor) << '\n';
    header << "cfg.lr_decay_epoch " << cfg_.lr_decay_epoch << '\n';
    header << "cfg.train_batch " << cfg_.train_batch << '\n';
    header << "cfg.val_batch " << cfg_.val_batch << '\n';
    header << "cfg.loss " << loss_name(cfg_.loss) << '\n';
    header << "cfg.tversky_alpha " << fmt_double(cfg_.tversky_alpha) << '\n';
    header << "cfg.tversky_beta " << fmt_double(cfg_.tversky_beta) << '\n';
    header << "cfg.tversky_paper_prefactor " << int(cfg_.tversky_paper_prefactor) << '\n';
    header << "cfg.weights_mode "
           << (cfg_.weights_mode == WeightsMode::batch ? "batch" : "dataset") << '\n';
    header << "cfg.augment " << augment_name(cfg_.augment) << '\n';
    header << "cfg.tta " << int(cfg_.tta) << '\n';
    header << "cfg.early_stop_fscore " << fmt_double(cfg_.early_stop_fscore) << '\n';
    header << "cfg.split_min_distance " << fmt_double(cfg_.split_min_distance) << '\n';
    header << "net.in_channels " << cfg_.network.in_channels << '\n';
    header << "net.num_classes " << cfg_.network.num_classes << '\n';
    header << "net.stage_depths " << cfg_.network.stage_depths[0] << ' '
           << cfg_.network.stage_depths[1] << ' ' << cfg_.network.stage_depths[2] << ' '
           << cfg_.network.stage_depths[3] << '\n';
    header << "net.base_width " << cfg_.network.base_width << '\n';
    header << "net.block_kind "
           << (cfg_.network.block_kind == BlockKind::residual ? "residual" : "bottleneck") << '\n';
    header << "net.se_reduction " << cfg_.network.se_reduction << '\n';
    header << "net.attention_before_concat " << int(cfg_.network.attention_before_concat) << '\n';
    header << "net.zero_init_residual_bn " << int(cfg_.network.zero_init_residual_bn) << '\n';

    const auto& entries = net_->params().entries();
    header << "tensors " << entries.size() << '\n';
    for (const auto& e : entries) {
        header << e.name << ' ' << (e.trainable ? 'P' : 'B') << ' ' << e.tensor.shape().size();
        for (auto d : e.tensor.shape()) header << ' ' << d;
        header << '\n';
    }
    header << "adam_slots " << opt_.slots().size() << '\n';
    header << "end_header\n";

    // Raw little-endian 32-bit values: every tensor, then m and v per slot.
    std::string blob = header.str();
    auto append_f32 = [&blob](const auto& values) {
        for (auto v : values) {
            const float f = static_cast<float>(v);
            const char* bytes = reinterpret_cast<const char*>(&f);
            blob.append(bytes, 4);
        }
    };
    for (const auto& e : entries) append_f32(e.tensor.values());
    for (const auto& slot : opt_.slots()) {
        append_f32(slot.m);
        append_f32(slot.v);
    }
    atomic_write_text(path, blob);
}

template <typename T>
TrainSession<T> TrainSession<T>::load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
    std::string line;
    auto next_line = [&]() -> std::string {
        if (!std::getline(in, line))
            throw std::runtime_error("truncated checkpoint header: " + path);
        return line;
    };
    if (next_line() != "tubeseg-checkpoint 1")
        throw std::runtime_error("not a checkpoint file (bad magic): " + path);

    TrainConfig cfg;
    NormalizationStats stats;
    int epoch = 0, best_epoch = 0;
    std::int64_t adam_step = 0;
    double best_fscore = -1.0;
    struct TensorDecl {
        std::string name;
        bool trainable;
        Shape shape;
    };
    std::vector<TensorDecl> decls;
    std::size_t adam_slot_count = 0;

    while (true) {
        std::istringstream ls(next_line());
        std::string key;
        ls >> key;
        if (key == "end_header") break;
        if (key == "epoch") ls >> epoch;
        else if (key == "adam_step") ls >> adam_step;
        else if (key == "master_seed") ls >> cfg.seed;
        else if (key == "best_fscore") ls >> best_fscore;
        else if (key == "best_epoch") ls >> best_epoch;
        else if (key == "stats_mean") ls >> stats.mean[0] >> stats.mean[1] >> stats.mean[2];
        else if (key == "stats_std") ls >> stats.stddev[0] >> stats.stddev[1] >> stats.stddev[2];
        else if (key == "stats_source") ls >> stats.source;
        else if (key == "cfg.epochs") ls >> cfg.epochs;
        else if (key == "cfg.lr") ls >> cfg.lr;
        else if (key == "cfg.lr_decay_factor") ls >> cfg.lr_decay_factor;
        else if (key == "cfg.lr_decay_epoch") ls >> cfg.lr_decay_epoch;
        else if (key == "cfg.train_batch") ls >> cfg.train_batch;
        else if (key == "cfg.val_batch") ls >> cfg.val_batch;
        else if (key == "cfg.loss") {
            std::string v;
            ls >> v;
            cfg.loss = loss_from_name(v);
        } else if (key == "cfg.tversky_alpha") ls >> cfg.tversky_alpha;
        else if (key == "cfg.tversky_beta") ls >> cfg.tversky_beta;
        else if (key == "cfg.tversky_paper_prefactor") {
            int v;
            ls >> v;
            cfg.tversky_paper_prefactor = v != 0;
        } else if (key == "cfg.weights_mode") {
            std::string v;
            ls >> v;
            cfg.weights_mode = v == "dataset" ? WeightsMode::dataset : WeightsMode::batch;
        } else if (key == "cfg.augment") {
            std::string v;
            ls >> v;
            cfg.augment = augment_from_name(v);
        } else if (key == "cfg.tta") {
            int v;
            ls >> v;
            cfg.tta = v != 0;
        } else if (key == "cfg.early_stop_fscore") ls >> cfg.early_stop_fscore;
        else if (key == "cfg.split_min_distance") ls >> cfg.split_min_distance;
        else if (key == "net.in_channels") ls >> cfg.network.in_channels;
        else if (key == "net.num_classes") ls >> cfg.network.num_classes;
        else if (key == "net.stage_depths") {
            cfg.network.stage_depths.assign(4, 0);
            ls >> cfg.network.stage_depths[0] >> cfg.network.stage_depths[1] >>
                cfg.network.stage_depths[2] >> cfg.network.stage_depths[3];
        } else if (key == "net.base_width") ls >> cfg.network.base_width;
        else if (key == "net.block_kind") {
            std::string v;
            ls >> v;
            cfg.network.block_kind = v == "bottleneck" ? BlockKind::bottleneck : BlockKind::residual;
        } else if (key == "net.se_reduction") ls >> cfg.network.se_reduction;
        else if (key == "net.attention_before_concat") {
            int v;
            ls >> v;
            cfg.network.attention_before_concat = v != 0;
        } else if (key == "net.zero_init_residual_bn") {
            int v;
            ls >> v;
            cfg.network.zero_init_residual_bn = v != 0;
        } else if (key == "tensors") {
            std::size_t count;
            ls >> count;
            for (std::size_t i = 0; i < count; ++i) {
                std::istringstream ts(next_line());
                TensorDecl d;
                char kind;
                std::size_t ndim;
                ts >> d.name >> kind >> ndim;
                d.trainable = kind == 'P';
                d.shape.resize(ndim);
                for (auto& dim : d.shape) ts >> dim;
                if (!ts) throw std::runtime_error("bad tensor declaration in checkpoint: " + line);
                decls.push_back(std::move(d));
            }
        } else if (key == "adam_slots") {
            ls >> adam_slot_count;
        }
        // Unknown keys are skipped for forward compatibility.
    }

    TrainSession<T> session(cfg, stats);
    session.completed_epochs_ = epoch;
    session.best_fscore_ = best_fscore;
    session.best_epoch_ = best_epoch;

    auto& entries = session.net_->params().entries();
    if (entries.size() != decls.size())
        throw std::runtime_error("checkpoint tensor count does not match network (" +
                                 std::to_string(decls.size()) + " vs " +
                                 std::to_string(entries.size()) + ")");
    auto read_f32_into = [&in, &path](auto dest) {
        for (auto& v : dest) {
            float f;
            in.read(reinterpret_cast<char*>(&f), 4);
            if (!in) throw std::runtime_error("truncated checkpoint payload: " + path);
            v = static_cast<std::remove_reference_t<decltype(v)>>(f);
        }
    };
    for (std::size_t i = 0; i < entries.size(); ++i) {
        if (entries[i].name != decls[i].name || entries[i].tensor.shape() != decls[i].shape)
            throw std::runtime_error("checkpoint tensor mismatch at " + decls[i].name);
        read_f32_into(entries[i].tensor.values_mut());
    }
    session.opt_.set_step_count(adam_step);
    auto& slots = session.opt_.slots();
    slots.clear();
    for (const auto& e : entries)
        if (e.trainable)
            slots.push_back(typename Adam<T>::Slot{
                e.name, std::vector<T>(e.tensor.numel(), T(0)),
                std::vector<T>(e.tensor.numel(), T(0))});
    if (slots.size() != adam_slot_count)
        throw std::runtime_error("checkpoint optimizer slot count mismatch");
    for (auto& slot : slots) {
        read_f32_into(std::span<T>(slot.m));
        read_f32_into(std::span<T>(slot.v));
    }
    return session;
}

// ---- evaluation and cross-validation ----

template <typename T>
ImageMetricsRow evaluate_sample(TrainSession<T>& session, const Sample& sample, int fold) {
    const TrainConfig& cfg = session.config();
    const ProbMap probs = session.predict(sample.image, cfg.tta);
    const LabelMask pred = argmax_mask(probs);
    const ConfusionCounts counts = confusion_counts(pred, sample.mask, cfg.network.num_classes);
    ImageMetricsRow row;
    row.image = sample.name;
    row.fold = fold;
    row.iou = iou(counts, 1);
    row.fscore = f_score(counts, 1);
    if (sample.gt_instances.width > 0) {
        SplitOptions opts;
        opts.min_distance = cfg.split_min_distance;
        opts.num_classes = cfg.network.num_classes;
        const InstanceMap pred_inst = split_touching(pred, nullptr, opts);
        row.aji = aji(sample.gt_instances, pred_inst);
    }
    return row;
}

template <typename T>
CvOutcome cross_validate(const std::vector<Sample>& data, const TrainConfig& cfg, int k, int jobs,
                         const std::string& out_dir) {
    cfg.validate();
    if (data.size() < static_cast<std::size_t>(k))
        throw std::invalid_argument("cross_validate requires at least k records");
    CvOutcome outcome;
    outcome.split = kfold_split(data.size(), k, cfg.seed);
    outcome.folds.resize(k);

    auto run_fold = [&](int fold) {
        CvFoldOutcome& fo = outcome.folds[fold];
        fo.fold = fold;
        fo.train_indices = outcome.split.complement_indices(fold);
        fo.val_indices = outcome.split.fold_indices(fold);
        std::vector<Sample> train, val;
        for (auto i : fo.train_indices) train.push_back(data[i]);
        for (auto i : fo.val_indices) val.push_back(data[i]);

        TrainConfig fold_cfg = cfg;
        fold_cfg.seed = mix_seed(cfg.seed, kTagFold, static_cast<std::uint64_t>(fold));
        TrainSession<T> session(fold_cfg, stats_from_samples(train));

        std::ofstream log;
        if (!out_dir.empty()) {
            std::filesystem::create_directories(out_dir);
            log.open(out_dir + "/fold" + std::to_string(fold) + "_log.csv");
        }
        fo.train = session.run(train, val, log.is_open() ? &log : nullptr);
        if (!out_dir.empty())
            session.save_checkpoint(out_dir + "/fold" + std::to_string(fold) + "_final.ckpt");

        for (std::size_t i = 0; i < val.size(); ++i)
            fo.rows.push_back(evaluate_sample(session, val[i], fold));
    };

    if (jobs <= 1) {
        for (int f = 0; f < k; ++f) run_fold(f);
    } else {
        std::vector<std::thread> pool;
        std::atomic<int> next{0};
        const int workers = std::min(jobs, k);
        for (int w = 0; w < workers; ++w)
            pool.emplace_back([&] {
                for (int f = next.fetch_add(1); f < k; f = next.fetch_add(1)) run_fold(f);
            });
        for (auto& t : pool) t.join();
    }

    std::vector<ImageMetricsRow> rows;
    for (const auto& fo : outcome.folds) rows.insert(rows.end(), fo.rows.begin(), fo.rows.end());
    outcome.report = MetricsReport::from_rows(std::move(rows));
    return outcome;
}

// ---- resize ----

namespace {

template <typename Buf>
Buf resize_nearest_buffer(const Buf& src, int w, int h, int nw, int nh, int channels) {
    Buf dst(static_cast<std::size_t>(nw) * nh * channels);
    for (int y = 0; y < nh; ++y) {
        const int sy = std::min(h - 1, y * h / nh);
        for (int x = 0; x < nw; ++x) {
            const int sx = std::min(w - 1, x * w / nw);
            for (int c = 0; c < channels; ++c)
                dst[(static_cast<std::size_t>(y) * nw + x) * channels + c] =
                    src[(static_cast<std::size_t>(sy) * w + sx) * channels + c];
        }
    }
    return dst;
}

}  // namespace

ImageU8 resize_nearest(const ImageU8& image, int new_w, int new_h) {
    ImageU8 out(new_w, new_h);
    out.pixels = resize_nearest_buffer(image.pixels, image.width, image.height, new_w, new_h, 3);
    return out;
}

LabelMask resize_nearest(const LabelMask& mask, int new_w, int new_h) {
    LabelMask out(new_w, new_h);
    out.ids = resize_nearest_buffer(mask.ids, mask.width, mask.height, new_w, new_h, 1);
    return out;
}

InstanceMap resize_nearest(const InstanceMap& map, int new_w, int new_h) {
    InstanceMap out(new_w, new_h);
    out.count = map.count;
    out.ids = resize_nearest_buffer(map.ids, map.width, map.height, new_w, new_h, 1);
    return out;
}

// ---- explicit instantiations ----

template class Adam<float>;
template class Adam<double>;
template class TrainSession<float>;
template class TrainSession<double>;
template ImageMetricsRow evaluate_sample(TrainSession<float>&, const Sample&, int);
template ImageMetricsRow evaluate_sample(TrainSession<double>&, const Sample&, int);
template CvOutcome cross_validate<float>(const std::vector<Sample>&, const TrainConfig&, int, int,
                                         const std::string&);
template CvOutcome cross_validate<double>(const std::vector<Sample>&, const TrainConfig&, int, int,
                                          const std::string&);

}  // namespace tubeseg
