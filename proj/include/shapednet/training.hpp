#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "shapednet/data.hpp"
#include "shapednet/loss.hpp"
#include "shapednet/network.hpp"

namespace shapednet {

struct TrainConfig {
    int epochs = 60;
    int warmup_epochs = 2;
    double lr_init = 1e-4;
    double lr_min = 0.0;
    int batch_size = 8;
    double beta1 = 0.9, beta2 = 0.999, adam_eps = 1e-8;
    uint64_t seed = 0;
    BfLossMode bf_loss_mode = BfLossMode::Absolute;
    LossWeights weights;
    double grad_clip = 0.0;        // global-norm clip; 0 disables
    bool bf_bias_init_mean = true; // start the regression bias at the train-set mean
    bool hflip = false;            // horizontal-flip augmentation
    void validate() const;
};

// Glorot-uniform tensor: +/- sqrt(6/(fan_in+fan_out)). Rank-4 kernels use
// fan_in = Ci*k*k, fan_out = Co*k*k; rank-2 [out,in] uses in/out features.
Tensor init_glorot(const Shape& shape, uint64_t seed);
double glorot_limit(const Shape& shape);

// Learning rate for a 0-based global step. Warmup ramps linearly so the last
// warmup step lands exactly on lr_init; afterwards a half-cosine spans the
// remaining steps so the first post-warmup step is exactly lr_init and the
// last is exactly lr_min.
double lr_at(int64_t step, int64_t steps_per_epoch, const TrainConfig& cfg);

struct AdamState {
    std::vector<std::vector<double>> m, v;
    int64_t t = 0;
    void init(const std::vector<Tensor>& params);
};

// Standard bias-corrected Adam; epsilon added outside the square root. Reads
// gradients from the params' grad buffers; aborts (throws, no mutation)
// on non-finite gradients.
void adam_step(std::vector<Tensor>& params, AdamState& state, double lr,
               double beta1, double beta2, double eps);

struct EpochRecord {
    int epoch = 0;  // 1-based
    LossBreakdown train_loss;
    double val_loss = 0;
    double lr_last = 0;       // lr of the epoch's final step
    double wall_seconds = 0;  // informational; excluded from serialization
};

struct TrainLog {
    std::vector<EpochRecord> epochs;
    int best_epoch = 0;  // 1-based argmin of val_loss
    // One line per epoch, fixed field order. Wall time is deliberately
    // excluded so identical runs serialize identically.
    std::string serialize() const;
};

struct TrainResult {
    TrainLog log;
    std::string best_checkpoint_path;
};

// Full recipe: seeded epoch shuffles, lr schedule, Adam, per-epoch validation
// with best-checkpoint selection; writes best.snf1 and train_log.txt into
// out_dir. image_root is the directory that sample image paths are relative
// to (usually the manifest's directory).
TrainResult train(ShapedNetModel& model, const std::vector<SampleRecord>& train_set,
                  const std::vector<SampleRecord>& val_set, const std::string& image_root,
                  const TrainConfig& cfg, const std::string& out_dir);

}  // namespace shapednet
