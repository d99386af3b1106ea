#include "prognet/model/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "prognet/numerics/ops.hpp"

namespace prognet::model {

std::vector<std::size_t> decay_epochs(std::size_t epochs) {
    std::vector<std::size_t> out;
    for (double f : {0.25, 0.5, 0.8})
        out.push_back(static_cast<std::size_t>(std::ceil(f * static_cast<double>(epochs) - 1e-9)));
    return out;
}

double lr_at(double base_lr, std::size_t epoch, std::size_t epochs) {
    double lr = base_lr;
    for (auto d : decay_epochs(epochs))
        if (epoch >= d && d > 0) lr *= 0.1;
    return lr;
}

std::vector<double> stage_accuracy(const ProgNet& net, const data::Dataset& ds, std::size_t batch) {
    nn::NoGradGuard no_grad;
    std::vector<std::size_t> correct(net.num_stages(), 0);
    std::vector<std::size_t> idx;
    for (std::size_t start = 0; start < ds.size(); start += batch) {
        idx.resize(std::min(batch, ds.size() - start));
        std::iota(idx.begin(), idx.end(), start);
        const auto out = net.forward(ds.batch(idx));
        for (std::size_t m = 0; m < out.logits.size(); ++m) {
            const auto pred = nn::argmax_rows(out.logits[m]);
            for (std::size_t i = 0; i < idx.size(); ++i)
                if (pred[i] == ds.labels[idx[i]]) ++correct[m];
        }
    }
    std::vector<double> acc;
    for (auto c : correct) acc.push_back(static_cast<double>(c) / static_cast<double>(ds.size()));
    return acc;
}

namespace {

Tensorf make_batch(const data::Dataset& ds, std::span<const std::size_t> idx, bool augment,
                   data::CropMode mode, std::mt19937_64& rng) {
    if (!augment) return ds.batch(idx);
    const std::size_t n = ds.image_size();
    std::vector<float> buf(idx.size() * n);
    for (std::size_t i = 0; i < idx.size(); ++i) {
        const auto img = data::augment_train(ds.image(idx[i]), ds.image_shape, rng, mode);
        std::copy(img.begin(), img.end(), buf.begin() + static_cast<std::ptrdiff_t>(i * n));
    }
    nn::Shape shape{idx.size()};
    shape.insert(shape.end(), ds.image_shape.begin(), ds.image_shape.end());
    return Tensorf(std::move(shape), std::move(buf));
}

}  // namespace

data::CheckpointMeta network_meta(const NetworkConfig& cfg) {
    data::CheckpointMeta meta;
    meta.kind = "prognet";
    meta.config_text = cfg.to_kv().str();
    meta.config_digest = data::digest_hex(meta.config_text);
    return meta;
}

ProgNet load_network(const data::Checkpoint& ckpt) {
    if (ckpt.meta.kind != "prognet")
        throw data::CheckpointError("expected a prognet checkpoint, found kind '" + ckpt.meta.kind + "'");
    ProgNet net(NetworkConfig::from_kv(data::KeyValues::parse(ckpt.meta.config_text)));
    auto params = net.parameters();
    data::restore(ckpt, params);
    return net;
}

TrainResult train_base(ProgNet& net, const data::Dataset& train, const data::Dataset& val,
                       const TrainOptions& opt, const TrainHooks& hooks) {
    train.validate();
    val.validate();
    if (opt.epochs == 0 || opt.batch_size == 0) throw std::invalid_argument("epochs and batch size must be positive");
    const auto& in = net.config().input_shape;
    if (train.image_shape != in || val.image_shape != in)
        throw nn::ShapeError("dataset images " + nn::shape_str(train.image_shape) +
                             " do not match network input " + nn::shape_str(in));
    if (train.num_classes != net.num_classes())
        throw std::invalid_argument("dataset has " + std::to_string(train.num_classes) +
                                    " classes, network " + std::to_string(net.num_classes()));

    const bool augment = opt.augment && in.size() == 3 && in[1] == 32 && in[2] == 32;
    const auto weights = net.config().weights();
    auto params = net.parameters();
    std::mt19937_64 rng(opt.seed);
    std::vector<std::size_t> order(train.size());
    std::iota(order.begin(), order.end(), 0);

    TrainResult result;
    result.best_metric = -1.0;
    std::size_t step = 0;
    for (std::size_t e = 0; e < opt.epochs; ++e) {
        nn::SgdOptions sgd{lr_at(opt.lr, e, opt.epochs), opt.momentum, opt.weight_decay};
        std::shuffle(order.begin(), order.end(), rng);
        double loss_sum = 0.0;
        std::size_t seen = 0;
        for (std::size_t start = 0; start < order.size(); start += opt.batch_size, ++step) {
            const std::span<const std::size_t> idx(order.data() + start,
                                                   std::min(opt.batch_size, order.size() - start));
            const auto labels = train.batch_labels(idx);
            double loss_value = 0.0;
            try {
                const auto x = make_batch(train, idx, augment, opt.crop_mode, rng);
                auto loss = joint_loss(net.forward(x), labels, weights);
                loss_value = loss.item();
                loss.backward();
                nn::sgd_step<float>(params, sgd);
            } catch (const nn::NonFiniteError& err) {
                std::ostringstream msg;
                msg << "training diverged at epoch " << e + 1 << ", step " << step << " (lr " << sgd.lr
                    << "): " << err.what();
                throw DivergenceError(msg.str());
            }
            loss_sum += loss_value * static_cast<double>(idx.size());
            seen += idx.size();
            if (hooks.on_step) hooks.on_step({e + 1, step, loss_value});
        }

        EpochMetrics m;
        m.epoch = e + 1;
        m.lr = sgd.lr;
        m.train_loss = loss_sum / static_cast<double>(seen);
        m.val_accuracy = stage_accuracy(net, val, opt.eval_batch);
        m.mean_accuracy = std::accumulate(m.val_accuracy.begin(), m.val_accuracy.end(), 0.0) /
                          static_cast<double>(m.val_accuracy.size());
        if (m.mean_accuracy > result.best_metric) {
            auto meta = network_meta(net.config());
            meta.epoch = static_cast<std::uint32_t>(m.epoch);
            meta.metric = m.mean_accuracy;
            result.best = data::capture(params, meta);
            result.best_metric = m.mean_accuracy;
            result.best_epoch = m.epoch;
        }
        result.history.push_back(m);
        if (hooks.on_epoch) hooks.on_epoch(m);
    }
    data::restore(result.best, params);
    return result;
}

}  // namespace prognet::model
