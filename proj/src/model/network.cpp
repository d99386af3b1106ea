#include "prognet/model/network.hpp"

#include <algorithm>
#include <stdexcept>

#include "prognet/numerics/ops.hpp"

namespace prognet::model {

namespace {

thread_local MaccCounter* active_counter = nullptr;

class ReluLayer : public Layer {
public:
    Tensorf forward(const Tensorf& x) const override { return nn::relu(x); }
};

class MaxPoolLayer : public Layer {
public:
    Tensorf forward(const Tensorf& x) const override { return nn::max_pool2d(x, 3, 2, 1); }
};

class FlattenLayer : public Layer {
public:
    Tensorf forward(const Tensorf& x) const override { return nn::flatten(x); }
};

class GapLayer : public Layer {
public:
    Tensorf forward(const Tensorf& x) const override {
        return x.rank() == 4 ? nn::global_avgpool(x) : x;
    }
};

Tensorf run(const Sequence& seq, Tensorf x) {
    for (const auto& layer : seq) x = layer->forward(x);
    return x;
}

class SequenceLayer : public Layer {
public:
    explicit SequenceLayer(Sequence seq) : seq_(std::move(seq)) {}
    Tensorf forward(const Tensorf& x) const override { return run(seq_, x); }
    void collect(std::vector<Param*>& out) override {
        for (auto& l : seq_) l->collect(out);
    }

private:
    Sequence seq_;
};

// conv-relu-conv plus identity (or 1×1 projection when widths differ), then relu.
class ResidualBlock : public Layer {
public:
    ResidualBlock(const std::string& name, std::size_t in, std::size_t out)
        : a_(name + ".a", in, out, 3, 1, 1), b_(name + ".b", out, out, 3, 1, 1) {
        if (in != out) proj_ = std::make_unique<Conv2dLayer>(name + ".p", in, out, 1, 1, 0);
    }
    Tensorf forward(const Tensorf& x) const override {
        auto y = b_.forward(nn::relu(a_.forward(x)));
        return nn::relu(nn::add(y, proj_ ? proj_->forward(x) : x));
    }
    void collect(std::vector<Param*>& out) override {
        a_.collect(out);
        b_.collect(out);
        if (proj_) proj_->collect(out);
    }

private:
    Conv2dLayer a_, b_;
    std::unique_ptr<Conv2dLayer> proj_;
};

// relu -> 3×3 conv producing k maps -> concatenated onto the input.
class DenseLayer : public Layer {
public:
    DenseLayer(const std::string& name, std::size_t in, std::size_t k) : conv_(name, in, k, 3, 1, 1) {}
    Tensorf forward(const Tensorf& x) const override {
        return nn::concat<float>({x, conv_.forward(nn::relu(x))}, 1);
    }
    void collect(std::vector<Param*>& out) override { conv_.collect(out); }

private:
    Conv2dLayer conv_;
};

struct Builder {
    const NetworkConfig& cfg;
    std::string prefix;
    Sequence seq;
    std::size_t ch = 0;
    bool spatial = true;
    int level = -1;
    int counter = 0;

    std::string next_name() { return prefix + ".u" + std::to_string(counter++); }

    void stem(std::size_t width) {
        if (cfg.stages.front().block_kind == BlockKind::mlp) {
            seq.push_back(std::make_unique<FlattenLayer>());
            ch = nn::shape_numel(cfg.input_shape);
            spatial = false;
        } else {
            seq.push_back(std::make_unique<Conv2dLayer>(next_name(), cfg.input_shape[0], width, 3, 2, 1));
            seq.push_back(std::make_unique<ReluLayer>());
            ch = width;
        }
        level = 0;
    }

    void to_level(int r) {
        while (level < r) {
            if (spatial) seq.push_back(std::make_unique<MaxPoolLayer>());
            ++level;
        }
    }

    void blocks(const StageSpec& spec, int r, std::size_t width) {
        for (int d = 0; d < spec.depth_per_resolution[r]; ++d) {
            switch (spec.block_kind) {
                case BlockKind::residual: {
                    const std::size_t out = width << r;
                    seq.push_back(std::make_unique<ResidualBlock>(next_name(), ch, out));
                    ch = out;
                    break;
                }
                case BlockKind::dense: {
                    const auto k = static_cast<std::size_t>(spec.growth_k);
                    seq.push_back(std::make_unique<DenseLayer>(next_name(), ch, k));
                    ch += k;
                    break;
                }
                case BlockKind::mlp:
                    seq.push_back(std::make_unique<LinearLayer>(next_name(), ch, width));
                    seq.push_back(std::make_unique<ReluLayer>());
                    ch = width;
                    break;
            }
        }
    }
};

std::unique_ptr<Layer> make_fusion(const std::string& name, std::size_t in, std::size_t out,
                                   bool spatial) {
    Sequence seq;
    if (spatial) seq.push_back(std::make_unique<Conv2dLayer>(name, in, out, 1, 1, 0));
    else seq.push_back(std::make_unique<LinearLayer>(name, in, out));
    seq.push_back(std::make_unique<ReluLayer>());
    return std::make_unique<SequenceLayer>(std::move(seq));
}

std::unique_ptr<Layer> make_head(const std::string& name, std::size_t in, std::size_t classes) {
    Sequence seq;
    seq.push_back(std::make_unique<GapLayer>());
    seq.push_back(std::make_unique<LinearLayer>(name, in, classes));
    return std::make_unique<SequenceLayer>(std::move(seq));
}

}  // namespace

MaccCounter::MaccCounter() : previous_(active_counter) { active_counter = this; }
MaccCounter::~MaccCounter() { active_counter = previous_; }

void MaccCounter::add(std::uint64_t maccs) {
    if (active_counter) active_counter->total_ += maccs;
}

Conv2dLayer::Conv2dLayer(const std::string& name, std::size_t in, std::size_t out, int kernel,
                         int stride, int pad)
    : w_(name + ".w", {out, in, static_cast<std::size_t>(kernel), static_cast<std::size_t>(kernel)}),
      b_(name + ".b", {out}),
      stride_(stride),
      pad_(pad) {}

Tensorf Conv2dLayer::forward(const Tensorf& x) const {
    auto y = nn::conv2d(x, w_.tensor, stride_, pad_);
    const auto& ws = w_.tensor.shape();
    MaccCounter::add(static_cast<std::uint64_t>(ws[2] * ws[3] * ws[1] * ws[0]) * y.dim(0) *
                     y.dim(2) * y.dim(3));
    return nn::add_bias(y, b_.tensor);
}

void Conv2dLayer::collect(std::vector<Param*>& out) {
    out.push_back(&w_);
    out.push_back(&b_);
}

LinearLayer::LinearLayer(const std::string& name, std::size_t in, std::size_t out)
    : w_(name + ".w", {in, out}), b_(name + ".b", {out}) {}

Tensorf LinearLayer::forward(const Tensorf& x) const {
    MaccCounter::add(static_cast<std::uint64_t>(w_.tensor.dim(0) * w_.tensor.dim(1)) * x.dim(0));
    return nn::linear(x, w_.tensor, b_.tensor);
}

void LinearLayer::collect(std::vector<Param*>& out) {
    out.push_back(&w_);
    out.push_back(&b_);
}

ProgNet::ProgNet(NetworkConfig config) : config_(std::move(config)) {
    config_.validate();
    const auto classes = static_cast<std::size_t>(config_.num_classes);
    const std::size_t levels = config_.stages.front().depth_per_resolution.size();

    if (config_.topology == Topology::parallel) {
        std::size_t prev_width = 0;
        for (std::size_t n = 0; n < config_.stages.size(); ++n) {
            const auto& spec = config_.stages[n];
            const std::string prefix = "s" + std::to_string(n + 1);
            const auto width = static_cast<std::size_t>(config_.base_width * spec.width_multiplier);
            Builder b{config_, prefix, {}};
            b.stem(width);
            for (std::size_t r = 0; r < levels; ++r) {
                b.to_level(static_cast<int>(r));
                b.blocks(spec, static_cast<int>(r), width);
            }
            Stage st;
            st.unit = std::move(b.seq);
            st.width = b.ch;
            if (n > 0) st.fusion = make_fusion(prefix + ".fuse", prev_width + b.ch, b.ch, b.spatial);
            st.head = make_head(prefix + ".head", b.ch, classes);
            prev_width = st.width;
            stages_.push_back(std::move(st));
        }
        return;
    }

    // Serial: one backbone cut into segments; each tap pools the running activation.
    std::size_t ch = 0;
    bool spatial = true;
    int level = -1;
    std::size_t prev_width = 0;
    for (std::size_t n = 0; n < config_.stages.size(); ++n) {
        const auto& spec = config_.stages[n];
        const std::string prefix = "s" + std::to_string(n + 1);
        const auto width = static_cast<std::size_t>(config_.base_width * spec.width_multiplier);
        Builder b{config_, prefix, {}, ch, spatial, level};
        if (n == 0) b.stem(width);
        for (std::size_t r = 0; r < levels; ++r) {
            if (spec.depth_per_resolution[r] == 0) continue;
            b.to_level(static_cast<int>(r));
            b.blocks(spec, static_cast<int>(r), width);
        }
        ch = b.ch;
        spatial = b.spatial;
        level = b.level;
        Stage st;
        st.unit = std::move(b.seq);
        st.width = ch;
        if (n > 0) st.fusion = make_fusion(prefix + ".fuse", prev_width + ch, ch, false);
        st.head = make_head(prefix + ".head", ch, classes);
        prev_width = ch;
        stages_.push_back(std::move(st));
    }
}

void ProgNet::init(std::mt19937_64& rng) {
    for (auto* p : parameters()) {
        auto& t = p->tensor;
        if (t.rank() == 1) {
            for (auto& v : t.data()) v = 0.0f;
        } else {
            const std::size_t fan_in = t.rank() == 4 ? t.numel() / t.dim(0) : t.dim(0);
            nn::fan_in_uniform(t, fan_in, rng);
        }
        std::fill(p->momentum_buffer.begin(), p->momentum_buffer.end(), 0.0f);
    }
}

std::vector<Param*> ProgNet::stage_parameters(std::size_t n) {
    auto& st = stages_.at(n);
    std::vector<Param*> out;
    for (auto& l : st.unit) l->collect(out);
    if (st.fusion) st.fusion->collect(out);
    st.head->collect(out);
    return out;
}

std::vector<Param*> ProgNet::head_parameters(std::size_t n) {
    std::vector<Param*> out;
    stages_.at(n).head->collect(out);
    return out;
}

std::vector<Param*> ProgNet::parameters() {
    std::vector<Param*> out;
    for (std::size_t n = 0; n < stages_.size(); ++n) {
        auto part = stage_parameters(n);
        out.insert(out.end(), part.begin(), part.end());
    }
    return out;
}

std::size_t ProgNet::parameter_count() const {
    std::size_t total = 0;
    for (auto* p : const_cast<ProgNet*>(this)->parameters()) total += p->tensor.numel();
    return total;
}

void ProgNet::check_input(const Tensorf& x) const {
    const auto& s = x.shape();
    if (s.size() != 4 || s[1] != config_.input_shape[0] || s[2] != config_.input_shape[1] ||
        s[3] != config_.input_shape[2])
        throw nn::ShapeError("network expects [N," + nn::shape_str(config_.input_shape).substr(1) +
                             " input, got " + nn::shape_str(s));
}

StageOutputs ProgNet::forward(const Tensorf& x, std::size_t stages) const {
    if (stages == 0 || stages > num_stages())
        throw std::out_of_range("stage count " + std::to_string(stages) + " outside 1.." +
                                std::to_string(num_stages()));
    Runner runner(*this, x);
    StageOutputs out;
    for (std::size_t n = 0; n < stages; ++n) {
        out.logits.push_back(runner.step());
        out.features.push_back(runner.feature());
        out.fused.push_back(runner.fused());
    }
    return out;
}

Runner::Runner(const ProgNet& net, Tensorf x) : net_(&net), input_(std::move(x)) {
    net.check_input(input_);
}

Tensorf Runner::step() {
    if (done_ >= net_->num_stages()) throw std::logic_error("all stages already executed");
    const auto& st = net_->stages_[done_];
    if (net_->config_.topology == Topology::parallel) {
        feature_ = run(st.unit, input_);
    } else {
        trunk_ = run(st.unit, done_ == 0 ? input_ : trunk_);
        feature_ = trunk_.rank() == 4 ? nn::global_avgpool(trunk_) : trunk_;
    }
    fused_ = done_ == 0 ? feature_ : st.fusion->forward(nn::concat<float>({fused_, feature_}, 1));
    ++done_;
    return st.head->forward(fused_);
}

CostVector CostVector::from_macc(std::vector<std::uint64_t> macc) {
    CostVector cv;
    std::uint64_t total = 0;
    for (auto m : macc) {
        if (m == 0) throw std::invalid_argument("stage with zero cost");
        total += m;
    }
    std::uint64_t running = 0;
    for (auto m : macc) {
        running += m;
        cv.c.push_back(static_cast<double>(m) / static_cast<double>(total));
        cv.cumulative.push_back(static_cast<double>(running) / static_cast<double>(total));
    }
    cv.macc = std::move(macc);
    return cv;
}

CostVector macc_count(const ProgNet& net) {
    nn::NoGradGuard no_grad;
    nn::Shape shape{1};
    shape.insert(shape.end(), net.config().input_shape.begin(), net.config().input_shape.end());
    Runner runner(net, Tensorf(shape));
    std::vector<std::uint64_t> macc;
    for (std::size_t n = 0; n < net.num_stages(); ++n) {
        MaccCounter counter;
        (void)runner.step();
        macc.push_back(counter.total());
    }
    return CostVector::from_macc(std::move(macc));
}

Tensorf joint_loss(const StageOutputs& out, std::span<const int> labels,
                   std::span<const double> weights) {
    if (weights.size() != out.logits.size())
        throw std::invalid_argument("joint_loss: " + std::to_string(weights.size()) + " weights for " +
                                    std::to_string(out.logits.size()) + " stages");
    Tensorf total;
    for (std::size_t m = 0; m < weights.size(); ++m) {
        auto term = nn::scale(nn::cross_entropy(out.logits[m], labels), static_cast<float>(weights[m]));
        total = m == 0 ? term : nn::add(total, term);
    }
    return total;
}

}  // namespace prognet::model
