#pragma once

#include <cstdint>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "prognet/model/config.hpp"
#include "prognet/numerics/optim.hpp"
#include "prognet/numerics/tensor.hpp"

namespace prognet::model {

using Tensorf = nn::Tensor<float>;
using Param = nn::Parameter<float>;

// Counts multiply-accumulates issued by layers on the current thread while alive.
// Convolutions add K²·Cin·Cout·Hout·Wout per image, fully connected layers in·out,
// summed over the batch.
class MaccCounter {
public:
    MaccCounter();
    ~MaccCounter();
    MaccCounter(const MaccCounter&) = delete;
    MaccCounter& operator=(const MaccCounter&) = delete;

    [[nodiscard]] std::uint64_t total() const { return total_; }
    static void add(std::uint64_t maccs);

private:
    std::uint64_t total_ = 0;
    MaccCounter* previous_;
};

// Building blocks. Each owns its parameters under a name prefix.
class Layer {
public:
    virtual ~Layer() = default;
    [[nodiscard]] virtual Tensorf forward(const Tensorf& x) const = 0;
    virtual void collect(std::vector<Param*>& out) { (void)out; }
};

class Conv2dLayer : public Layer {
public:
    Conv2dLayer(const std::string& name, std::size_t in, std::size_t out, int kernel, int stride,
                int pad);
    [[nodiscard]] Tensorf forward(const Tensorf& x) const override;
    void collect(std::vector<Param*>& out) override;
    [[nodiscard]] std::size_t out_channels() const { return w_.tensor.dim(0); }

private:
    Param w_, b_;
    int stride_, pad_;
};

class LinearLayer : public Layer {
public:
    LinearLayer(const std::string& name, std::size_t in, std::size_t out);
    [[nodiscard]] Tensorf forward(const Tensorf& x) const override;
    void collect(std::vector<Param*>& out) override;

private:
    Param w_, b_;
};

using Sequence = std::vector<std::unique_ptr<Layer>>;

struct StageOutputs {
    std::vector<Tensorf> features;  // F_n
    std::vector<Tensorf> fused;     // fused features; fused[0] is features[0]
    std::vector<Tensorf> logits;    // O_n, pre-softmax
};

class ProgNet;

// Executes a network one stage at a time on a fixed batch.
class Runner {
public:
    Runner(const ProgNet& net, Tensorf x);
    // Runs the next stage and returns its logits.
    Tensorf step();
    [[nodiscard]] std::size_t stages_done() const { return done_; }
    [[nodiscard]] const Tensorf& feature() const { return feature_; }
    [[nodiscard]] const Tensorf& fused() const { return fused_; }

private:
    const ProgNet* net_;
    Tensorf input_;
    Tensorf trunk_;  // serial backbone activation
    Tensorf feature_;
    Tensorf fused_;
    std::size_t done_ = 0;
};

class ProgNet {
public:
    // Throws data::ConfigError for an invalid configuration.
    explicit ProgNet(NetworkConfig config);
    ProgNet(ProgNet&&) noexcept = default;
    ProgNet& operator=(ProgNet&&) noexcept = default;

    // Fan-in uniform weights, zero biases.
    void init(std::mt19937_64& rng);

    [[nodiscard]] const NetworkConfig& config() const { return config_; }
    [[nodiscard]] std::size_t num_stages() const { return stages_.size(); }
    [[nodiscard]] std::size_t num_classes() const { return config_.num_classes; }

    [[nodiscard]] std::vector<Param*> parameters();
    // Unit, fusion and head parameters of stage n (0-based).
    [[nodiscard]] std::vector<Param*> stage_parameters(std::size_t n);
    [[nodiscard]] std::vector<Param*> head_parameters(std::size_t n);
    [[nodiscard]] std::size_t parameter_count() const;

    [[nodiscard]] StageOutputs forward(const Tensorf& x) const { return forward(x, num_stages()); }
    [[nodiscard]] StageOutputs forward(const Tensorf& x, std::size_t stages) const;

private:
    friend class Runner;
    struct Stage {
        Sequence unit;
        std::unique_ptr<Layer> fusion;  // null for stage 1
        std::unique_ptr<Layer> head;
        std::size_t width = 0;
    };
    void check_input(const Tensorf& x) const;

    NetworkConfig config_;
    std::vector<Stage> stages_;
};

struct CostVector {
    std::vector<std::uint64_t> macc;  // raw per stage
    std::vector<double> c;            // macc / total
    std::vector<double> cumulative;   // prefix(m) = Σ_{i<=m} macc_i / total; last entry is 1

    [[nodiscard]] std::size_t size() const { return c.size(); }
    // Cumulative cost after stages 1..m (m is 1-based).
    [[nodiscard]] double prefix(std::size_t m) const { return cumulative.at(m - 1); }
    static CostVector from_macc(std::vector<std::uint64_t> macc);
};

CostVector macc_count(const ProgNet& net);

// Σ_m w_m · CE(O_m, labels)
Tensorf joint_loss(const StageOutputs& out, std::span<const int> labels,
                   std::span<const double> weights);

}  // namespace prognet::model
