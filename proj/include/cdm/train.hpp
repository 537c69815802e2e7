#pragma once

#include "cdm/model.hpp"

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace cdm {

struct LossWeights {
    double disc = 1.0;
    double ce = 1.0;
    double sc = 1.0;
    double rec = 0.5;
    double sparse = 1.0;  // the L1 strength itself lives in ModelConfig::lambda
    double align = 0.1;

    static LossWeights zeros() { return {0, 0, 0, 0, 0, 0}; }
};

/// Unweighted terms (per-item terms averaged over the batch) and the weighted total.
struct LossBreakdown {
    double disc = 0.0;
    double ce = 0.0;
    double sc = 0.0;
    double rec = 0.0;
    double sparse = 0.0;
    double align = 0.0;
    double total = 0.0;
};

/// One training region: head input plus known class index, or -1 for background.
struct Sample {
    Vector feature;
    int cls = -1;
};

LossBreakdown total_loss(const Model& model, const std::vector<Sample>& batch, const LossWeights& weights);

struct LossAndGrad {
    LossBreakdown loss;
    ModelParams grad;
};
LossAndGrad loss_and_grad(const Model& model, const std::vector<Sample>& batch, const LossWeights& weights);
/// Flat gradient in ModelParams order.
std::vector<double> grad(const Model& model, const std::vector<Sample>& batch, const LossWeights& weights);

struct FdOptions {
    double h = 1e-5;
    std::size_t per_block = 24;   // indices sampled from each parameter block
    std::uint64_t seed = 0;
    double kink_window = 1e-3;
    double abs_floor = 1e-6;      // denominator floor for the relative error
};

struct FdReport {
    double max_rel_error = 0.0;
    std::size_t checked = 0;
    std::size_t excluded = 0;  // kink-adjacent indices
    std::size_t worst_index = 0;
    std::string worst_block;
    double worst_analytic = 0.0;
    double worst_numeric = 0.0;
};

/// Central differences against the analytic gradient on a sample of flat indices.
FdReport fd_check(const Model& model, const std::vector<Sample>& batch, const LossWeights& weights,
                  const FdOptions& options = {});

struct SgdConfig {
    double lr = 0.02;
    std::size_t batch_size = 16;
    std::size_t epochs = 50;
    std::uint64_t seed = 0;
};

struct TrainResult {
    Model model;
    std::vector<LossBreakdown> history;  // [0] before training, then one per epoch
    bool diverged = false;
};

/// Refits the background PCA on head outputs of the background samples (cls < 0).
/// Keeps the current model when fewer than two are available.
void refit_background(Model& model, const std::vector<Sample>& data);

TrainResult train_loop(Model model, const std::vector<Sample>& data, const SgdConfig& sgd,
                       const LossWeights& weights);

}  // namespace cdm
