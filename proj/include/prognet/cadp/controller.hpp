#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <random>
#include <vector>

#include "prognet/cadp/targets.hpp"
#include "prognet/data/checkpoint.hpp"
#include "prognet/data/dataset.hpp"
#include "prognet/data/kv_config.hpp"
#include "prognet/model/network.hpp"
#include "prognet/numerics/lstm.hpp"

namespace prognet::cadp {

using model::Param;
using model::Tensorf;

struct ControllerConfig {
    std::size_t hidden = 128;
    std::size_t layers = 3;
    double dropout = 0.2;
    double alpha = 1.0;
    double lambda = 1.0;
    std::size_t epochs = 20;
    double switch_fraction = 0.8;
    std::size_t batch_size = 50;
    double lr = 0.5;
    double momentum = 0.0;
    double weight_decay = 0.0;
    // Cross-entropy on every stage's class output; otherwise only at the stage
    // the targets emit at for the middle threshold.
    bool every_stage_ce = true;
    ThresholdGrid grid;
    std::uint64_t seed = 1;

    void validate() const;
    static ControllerConfig from_kv(const data::KeyValues& kv);
    [[nodiscard]] data::KeyValues to_kv() const;
    // Epochs (0-based) before this index take correctness from the evaluation heads.
    [[nodiscard]] std::size_t switch_epoch() const;
};

struct ControllerStep {
    Tensorf logits;      // [B, n] refined class scores
    Tensorf confidence;  // [B, 1] post-sigmoid
};

// Recurrent controller: an LSTM stack reading each stage's pre-softmax vector,
// a class head (n outputs) and a confidence head (1 output, sigmoid).
class Controller {
public:
    Controller(std::size_t num_classes, std::size_t hidden, std::size_t layers, double dropout);
    Controller(std::size_t num_classes, const ControllerConfig& cfg)
        : Controller(num_classes, cfg.hidden, cfg.layers, cfg.dropout) {}

    void init(std::mt19937_64& rng);

    [[nodiscard]] nn::LstmState<float> start(std::size_t batch) const { return lstm_.zero_state(batch); }
    // One stage: consumes logits [B, n] and advances `state`.
    [[nodiscard]] ControllerStep step(const Tensorf& stage_logits, nn::LstmState<float>& state, bool train,
                                      std::mt19937_64& rng) const;
    // All stages from a zero state.
    [[nodiscard]] std::vector<ControllerStep> forward(const std::vector<Tensorf>& stage_logits, bool train,
                                                      std::mt19937_64& rng) const;

    [[nodiscard]] std::vector<Param*> parameters();
    [[nodiscard]] std::vector<Param*> confidence_parameters();
    [[nodiscard]] std::size_t num_classes() const { return classes_; }
    [[nodiscard]] std::size_t hidden() const { return lstm_.hidden_size(); }

private:
    std::size_t classes_;
    nn::LstmStack<float> lstm_;
    Param cls_w_, cls_b_, conf_w_, conf_b_;
};

// Per-image base-network outputs, computed once because the base is frozen.
struct StageTable {
    std::size_t images = 0, stages = 0, classes = 0;
    std::vector<float> logits;  // [image][stage][class]
    std::vector<int> labels;

    [[nodiscard]] std::span<const float> row(std::size_t image, std::size_t stage) const {
        return {logits.data() + (image * stages + stage) * classes, classes};
    }
    [[nodiscard]] std::vector<int> head_correct(std::size_t image) const;
    // Stage-major batch tensors for the given images.
    [[nodiscard]] std::vector<Tensorf> batch(std::span<const std::size_t> images) const;
};

StageTable compute_stage_table(const model::ProgNet& net, const data::Dataset& ds, std::size_t batch = 500);

// Per-image z* from head correctness; persisted so reruns skip the solves.
struct TargetCache {
    std::uint32_t base_crc = 0;
    double lambda = 0.0;
    std::vector<double> grid;
    std::vector<double> costs;
    std::size_t stages = 0;
    std::vector<double> z;  // [image][stage]

    [[nodiscard]] bool matches(std::uint32_t crc, double lam, const ThresholdGrid& g,
                               std::span<const double> c, std::size_t images) const;
};

void save_target_cache(const TargetCache& cache, const std::filesystem::path& path);
// nullopt when the file is missing or unreadable.
std::optional<TargetCache> load_target_cache(const std::filesystem::path& path);

struct ControllerEpoch {
    std::size_t epoch = 0;  // 1-based
    bool head_targets = true;
    double loss = 0.0;
    double target_gap = 0.0;  // mean over images of mean_i |z_i − z*_i|, eval mode
    double stage_accuracy_last = 0.0;
};

struct ControllerTrainOptions {
    std::optional<std::filesystem::path> cache_path;
    std::uint32_t base_crc = 0;
    std::function<void(const ControllerEpoch&)> on_epoch;
};

struct ControllerResult {
    Controller controller;
    std::vector<ControllerEpoch> history;
    std::size_t solves = 0;  // head-target solves performed (0 when the cache was used)
    bool cache_hit = false;
};

ControllerResult train_controller(const model::ProgNet& net, const data::Dataset& train,
                                  const ControllerConfig& cfg, const ControllerTrainOptions& opt = {});

// Same, from precomputed base outputs and costs.
ControllerResult train_controller(const StageTable& table, const model::CostVector& cost,
                                  const ControllerConfig& cfg, const ControllerTrainOptions& opt = {});

data::CheckpointMeta controller_meta(const ControllerConfig& cfg, std::size_t num_classes);
Controller load_controller(const data::Checkpoint& ckpt);

}  // namespace prognet::cadp
