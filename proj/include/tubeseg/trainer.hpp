#pragma once

// Training loop (Adam with step decay), checkpointing, k-fold
// cross-validation and inference glue. All randomness is derived from the
// master seed plus (epoch, sample) tags, so runs are reproducible and a
// checkpoint resume continues bit-exactly.

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "tubeseg/augment.hpp"
#include "tubeseg/image.hpp"
#include "tubeseg/io.hpp"
#include "tubeseg/metrics.hpp"
#include "tubeseg/network.hpp"
#include "tubeseg/postprocess.hpp"
#include "tubeseg/synth.hpp"

namespace tubeseg {

enum class Precision { f32, f64 };
enum class LossKind { dice_wce, tversky };
enum class WeightsMode { batch, dataset };

struct TrainConfig {
    int epochs = 60;
    double lr = 1e-4;
    double lr_decay_factor = 0.5;
    int lr_decay_epoch = 30;  // decayed lr applies from this epoch on (1-based)
    int train_batch = 4;
    int val_batch = 2;
    LossKind loss = LossKind::tversky;
    double tversky_alpha = 0.3;
    double tversky_beta = 0.7;
    bool tversky_paper_prefactor = true;
    WeightsMode weights_mode = WeightsMode::batch;
    AugmentationConfig::Preset augment = AugmentationConfig::Preset::low;
    bool tta = true;
    std::uint64_t seed = 0;
    double early_stop_fscore = 0.0;  // <= 0 disables early stopping
    double split_min_distance = 8.0;
    NetworkConfig network;

    void validate() const;
    static TrainConfig desk();
};

struct Sample {
    std::string name;
    ImageU8 image;
    LabelMask mask;            // 2- or 3-class labels per config
    InstanceMap gt_instances;  // may be empty when not evaluated
};

// Loads images and masks referenced by the manifest; picks mask2 or mask3
// per num_classes.
std::vector<Sample> load_samples(const DatasetManifest& manifest, int num_classes,
                                 bool with_instances);

NormalizationStats stats_from_samples(const std::vector<Sample>& samples);

template <typename T>
class Adam {
public:
    struct Slot {
        std::string name;
        std::vector<T> m, v;
    };

    Adam(double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
        : beta1_(beta1), beta2_(beta2), eps_(eps) {}

    // Bias-corrected update over all trainable entries; parameters without
    // an accumulated gradient this step are treated as zero-gradient.
    void step(ParameterStore<T>& params, double lr);

    std::vector<Slot>& slots() { return slots_; }
    const std::vector<Slot>& slots() const { return slots_; }
    std::int64_t step_count() const { return t_; }
    void set_step_count(std::int64_t t) { t_ = t; }
    double beta1() const { return beta1_; }
    double beta2() const { return beta2_; }
    double epsilon() const { return eps_; }

private:
    void ensure_slots(const ParameterStore<T>& params);

    std::vector<Slot> slots_;
    double beta1_, beta2_, eps_;
    std::int64_t t_ = 0;
};

struct EpochLog {
    int epoch = 0;
    double lr = 0.0;
    double train_loss = 0.0;
    double val_iou = 0.0;
    double val_fscore = 0.0;
};

struct TrainResult {
    std::vector<EpochLog> log;
    int best_epoch = 0;
    double best_fscore = 0.0;
    bool early_stopped = false;
};

void write_train_log_csv(std::ostream& os, const std::vector<EpochLog>& log);

template <typename T>
class TrainSession {
public:
    TrainSession(TrainConfig cfg, NormalizationStats stats);

    EpochLog run_epoch(const std::vector<Sample>& train, const std::vector<Sample>& val);

    // Runs remaining epochs; writes one CSV row per epoch to log_csv when
    // given, saves the best-validation checkpoint to best_path when given.
    TrainResult run(const std::vector<Sample>& train, const std::vector<Sample>& val,
                    std::ostream* log_csv = nullptr, const std::string& best_path = "");

    // Eval-mode softmax prediction, optionally flip-averaged.
    ProbMap predict(const ImageU8& image, bool use_tta);

    double lr_for_epoch(int epoch) const;
    int completed_epochs() const { return completed_epochs_; }
    Network<T>& network() { return *net_; }
    Adam<T>& optimizer() { return opt_; }
    const TrainConfig& config() const { return cfg_; }
    const NormalizationStats& stats() const { return stats_; }
    double best_fscore() const { return best_fscore_; }
    int best_epoch() const { return best_epoch_; }

    void save_checkpoint(const std::string& path) const;
    static TrainSession<T> load_checkpoint(const std::string& path);

private:
    TrainConfig cfg_;
    NormalizationStats stats_;
    std::unique_ptr<Network<T>> net_;
    Adam<T> opt_;
    int completed_epochs_ = 0;
    double best_fscore_ = -1.0;
    int best_epoch_ = 0;
    std::vector<T> dataset_weights_;
    bool dataset_weights_ready_ = false;
};

// ---- cross-validation ----

struct CvFoldOutcome {
    int fold = 0;
    std::vector<std::size_t> train_indices, val_indices;
    TrainResult train;
    std::vector<ImageMetricsRow> rows;
};

struct CvOutcome {
    FoldSplit split;
    std::vector<CvFoldOutcome> folds;
    MetricsReport report;
};

// Trains k models on complementary folds (optionally in parallel threads)
// and evaluates each on its held-out fold with the configured TTA and
// watershed splitting.
template <typename T>
CvOutcome cross_validate(const std::vector<Sample>& data, const TrainConfig& cfg, int k, int jobs,
                         const std::string& out_dir = "");

// Per-image held-out evaluation used by cross_validate and the eval command.
template <typename T>
ImageMetricsRow evaluate_sample(TrainSession<T>& session, const Sample& sample, int fold);

// Nearest-neighbor resize (used when inference inputs are not 32-divisible).
ImageU8 resize_nearest(const ImageU8& image, int new_w, int new_h);
LabelMask resize_nearest(const LabelMask& mask, int new_w, int new_h);
InstanceMap resize_nearest(const InstanceMap& map, int new_w, int new_h);

}  // namespace tubeseg
