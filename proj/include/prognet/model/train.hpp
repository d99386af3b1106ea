#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <stdexcept>
#include <vector>

#include "prognet/data/augment.hpp"
#include "prognet/data/checkpoint.hpp"
#include "prognet/data/dataset.hpp"
#include "prognet/model/network.hpp"

namespace prognet::model {

struct DivergenceError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct TrainOptions {
    std::size_t epochs = 1;
    std::size_t batch_size = 256;
    double lr = 0.1;
    double momentum = 0.9;
    double weight_decay = 1e-4;
    std::uint64_t seed = 1;
    // Crop/flip augmentation; only applied to C×32×32 images.
    bool augment = true;
    data::CropMode crop_mode = data::CropMode::pad_crop;
    std::size_t eval_batch = 500;
};

// Epochs (0-based) at which the learning rate is cut by 10: ⌈0.25E⌉, ⌈0.5E⌉, ⌈0.8E⌉.
std::vector<std::size_t> decay_epochs(std::size_t epochs);
double lr_at(double base_lr, std::size_t epoch, std::size_t epochs);

struct EpochMetrics {
    std::size_t epoch = 0;  // 1-based
    double lr = 0.0;
    double train_loss = 0.0;
    std::vector<double> val_accuracy;  // per stage
    double mean_accuracy = 0.0;
};

struct StepInfo {
    std::size_t epoch = 0;
    std::size_t step = 0;  // global, 0-based
    double loss = 0.0;
};

struct TrainHooks {
    std::function<void(const StepInfo&)> on_step;
    std::function<void(const EpochMetrics&)> on_epoch;
};

struct TrainResult {
    std::vector<EpochMetrics> history;
    std::size_t best_epoch = 0;
    double best_metric = 0.0;
    data::Checkpoint best;  // parameters at best_epoch; also restored into the model
};

// Per-stage top-1 accuracy without gradient tracking.
std::vector<double> stage_accuracy(const ProgNet& net, const data::Dataset& ds,
                                   std::size_t batch = 500);

// Joint weighted cross-entropy training with step decay. The model is left
// holding the parameters with the best mean per-stage validation accuracy.
TrainResult train_base(ProgNet& net, const data::Dataset& train, const data::Dataset& val,
                       const TrainOptions& opt, const TrainHooks& hooks = {});

data::CheckpointMeta network_meta(const NetworkConfig& cfg);
// Rebuilds a network from a checkpoint's embedded configuration.
ProgNet load_network(const data::Checkpoint& ckpt);

}  // namespace prognet::model
