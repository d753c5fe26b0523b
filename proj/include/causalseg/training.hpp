#pragma once

#include <filesystem>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "causalseg/config.hpp"
#include "causalseg/data.hpp"
#include "causalseg/metrics.hpp"
#include "causalseg/model.hpp"
#include "causalseg/tokenizer.hpp"

namespace causalseg {

/// Scalar view of the adversarial objective L = L_c - lambda * L_s.
struct LossBundle {
    double causal = 0.0;       // L_c
    double confounding = 0.0;  // L_s
    double lambda = 0.0;
    double total = 0.0;        // L
};

struct LossTerms {
    torch::Tensor causal;
    torch::Tensor confounding;
    torch::Tensor total;
    double lambda = 0.0;

    LossBundle values() const;
};

/// Pixel- and batch-averaged binary cross-entropy on logits for each stream,
/// each pixel term capped at 100.
/// `logits_confounding` may be undefined (no intervention module): L_s = 0.
/// Throws UserError when `gt` holds values other than 0 and 1.
LossTerms compute_losses(const torch::Tensor& logits_causal, const torch::Tensor& logits_confounding,
                         const torch::Tensor& gt, double lambda);

struct Batch {
    torch::Tensor images;
    torch::Tensor masks;
    torch::Tensor tokens;
    torch::Tensor lengths;
};

Batch gather_batch(const SegmentationSet& set, const torch::Tensor& indices);

/// One joint gradient step on every trainable parameter minimising L. A
/// non-finite loss throws DivergenceError before any parameter changes.
LossBundle train_step(CausalSegModel& model, torch::optim::Optimizer& optimizer, const Batch& batch, double lambda);

/// Closed-form cosine decay from `base` at epoch 0 to 0 at `max_epochs`.
double cosine_lr(double base, int64_t epoch, int64_t max_epochs);

struct TrainState {
    int64_t epoch = 0;  // completed epochs
    double best_val_dice = -1.0;
    int64_t best_epoch = 0;
    int64_t epochs_since_improvement = 0;
    double learning_rate = 0.0;
    uint64_t seed = 0;

    /// Records a validation score; returns true when it is a new best.
    bool observe(double val_dice);
    bool should_stop(int64_t patience, int64_t max_epochs) const;
};

struct EpochRecord {
    int64_t epoch = 0;
    LossBundle loss;
    double lr = 0.0;
    double val_dice = 0.0;
    double val_miou = 0.0;
};

/// Model, tokenizer and resolved config travelling together.
struct Segmenter {
    RunConfig config;
    std::shared_ptr<Tokenizer> tokenizer;
    CausalSegModel model{nullptr};
};

/// Seeds torch and builds an untrained model for `config` and `tokenizer`;
/// loads CLIP weights when configured.
Segmenter build_segmenter(const RunConfig& config, std::shared_ptr<Tokenizer> tokenizer);

/// Single archive: parameters and buffers keyed by module path, optimizer
/// state, TrainState, resolved config, its architecture hash and the tokenizer.
void save_checkpoint(const std::filesystem::path& path, const Segmenter& seg, const TrainState& state,
                     torch::optim::Optimizer* optimizer = nullptr);

struct LoadedCheckpoint {
    Segmenter segmenter;
    TrainState state;
    std::string arch_hash;
};

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

/// Thresholds D_c logits at 0 and averages per-image Dice / mIoU.
MetricsReport evaluate(CausalSegModel& model, const SegmentationSet& set, int64_t batch_size,
                       MiouMode mode = MiouMode::TwoClass);

struct FitOptions {
    /// Called after each epoch; returning false stops training.
    std::function<bool(const EpochRecord&)> on_epoch;
    bool verbose = false;
};

struct FitResult {
    std::filesystem::path best_checkpoint;
    std::vector<EpochRecord> history;
    TrainState state;
};

/// Adam with per-epoch cosine schedule, validation Dice every epoch, best
/// checkpoint kept, early stopping after `patience` epochs without
/// improvement. Writes metrics.csv, config.json, best.ckpt, last.ckpt and
/// vocab.txt (word tokenizer) under `out_dir`.
FitResult fit(Segmenter& seg, const SegmentationSet& train, const SegmentationSet& val,
              const std::filesystem::path& out_dir, const FitOptions& options = {});

}  // namespace causalseg
