#pragma once

#include <memory>
#include <random>

#include "prognet/cadp/controller.hpp"
#include "prognet/data/synthetic.hpp"
#include "prognet/model/train.hpp"
#include "prognet/policy/policy.hpp"

namespace testing {

struct DeskOptions {
    std::size_t samples_per_tier = 2000;
    std::size_t base_epochs = 30;
    std::size_t controller_epochs = 20;
    std::size_t controller_hidden = 128;
    std::size_t controller_layers = 1;
    double controller_switch = 1.0;
    double base_lr = 0.02;
    std::uint64_t seed = 1;
    prognet::model::NetworkConfig network = prognet::model::NetworkConfig::preset("p4-mlp");
    prognet::data::SyntheticSpec data{};
};

// Synthetic tiered data, a 4-stage mlp base network and a trained controller.
struct DeskRun {
    prognet::data::Dataset train, val;
    std::unique_ptr<prognet::model::ProgNet> net;
    std::unique_ptr<prognet::cadp::Controller> ctrl;
    prognet::model::CostVector cost;
    std::vector<prognet::policy::ImageRecord> records;  // validation split
};

inline DeskRun train_desk(const DeskOptions& opt = {}) {
    using namespace prognet;
    DeskRun run;
    data::SyntheticSpec spec = opt.data;
    spec.samples_per_tier = opt.samples_per_tier;
    spec.seed = opt.seed;
    run.train = data::make_synthetic(spec, data::Split::train);
    run.val = data::make_synthetic(spec, data::Split::val);

    run.net = std::make_unique<model::ProgNet>(opt.network);
    std::mt19937_64 rng(opt.seed);
    run.net->init(rng);
    model::TrainOptions topt;
    topt.epochs = opt.base_epochs;
    topt.batch_size = 64;
    topt.lr = opt.base_lr;
    topt.seed = opt.seed;
    (void)model::train_base(*run.net, run.train, run.val, topt);

    cadp::ControllerConfig cfg;
    cfg.epochs = opt.controller_epochs;
    cfg.hidden = opt.controller_hidden;
    cfg.layers = opt.controller_layers;
    cfg.switch_fraction = opt.controller_switch;
    cfg.seed = opt.seed;
    auto res = cadp::train_controller(*run.net, run.train, cfg);
    run.ctrl = std::make_unique<cadp::Controller>(std::move(res.controller));
    run.cost = model::macc_count(*run.net);
    run.records = policy::compute_records(*run.net, run.ctrl.get(), run.val);
    return run;
}

}  // namespace testing
