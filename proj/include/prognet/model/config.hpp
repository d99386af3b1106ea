#pragma once

#include <string>
#include <vector>

#include "prognet/data/kv_config.hpp"
#include "prognet/numerics/tensor.hpp"

namespace prognet::model {

enum class Topology { parallel, serial };

// `mlp` is a test-scale block: fully connected layers on the flattened input.
enum class BlockKind { residual, dense, mlp };

std::string to_string(Topology t);
std::string to_string(BlockKind b);
Topology parse_topology(const std::string& s);
BlockKind parse_block_kind(const std::string& s);

struct StageSpec {
    BlockKind block_kind = BlockKind::residual;
    int width_multiplier = 1;
    // Block counts per spatial resolution. Parallel stages are full columns;
    // serial stages are the backbone segment between two taps.
    std::vector<int> depth_per_resolution;
    int growth_k = 12;
};

struct NetworkConfig {
    Topology topology = Topology::parallel;
    std::vector<StageSpec> stages;
    int base_width = 16;
    int num_classes = 10;
    nn::Shape input_shape{3, 32, 32};
    std::vector<double> stage_weights;  // empty -> uniform

    [[nodiscard]] std::size_t num_stages() const { return stages.size(); }
    [[nodiscard]] std::vector<double> weights() const;
    void validate() const;

    // Named configurations: p4-residual, p6-residual, s9-dense (CIFAR-10
    // shapes) and p4-mlp / p2-mlp / s4-mlp (desk scale).
    static NetworkConfig preset(const std::string& name);

    // Keys: preset (optional base), topology, block, multipliers, depth
    // (parallel), segments (serial, "a/b/c" per stage), growth, base_width,
    // num_classes, input_shape, stage_weights.
    static NetworkConfig from_kv(const data::KeyValues& kv);
    [[nodiscard]] data::KeyValues to_kv() const;
};

}  // namespace prognet::model
