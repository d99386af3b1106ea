#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>
#include <random>

#include "cadp_oracle.hpp"
#include "doctest.h"
#include "prognet/cadp/controller.hpp"
#include "prognet/data/synthetic.hpp"
#include "prognet/model/train.hpp"
#include "prognet/numerics/ops.hpp"

using namespace prognet;
using cadp::ThresholdGrid;

TEST_CASE("emit stage follows the first confidence reaching the threshold") {
    const std::vector<double> hi{0.95, 0.2, 0.3};
    CHECK(cadp::emit_stage(hi, 0.9) == 1);
    const std::vector<double> lo{0.1, 0.1, 0.1};
    CHECK(cadp::emit_stage(lo, 0.5) == 3);
    const std::vector<double> tie{0.2, 0.5, 0.1};
    CHECK(cadp::emit_stage(tie, 0.5) == 2);
    CHECK_THROWS_AS((void)cadp::emit_stage(std::vector<double>{}, 0.5), std::invalid_argument);

    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<double> z(4);
        for (auto& v : z) v = u(rng);
        const double top = *std::max_element(z.begin(), z.end() - 1);
        const double bottom = *std::min_element(z.begin(), z.end());
        CHECK(cadp::emit_stage(z, std::nextafter(top, 1.0)) == 4);
        CHECK(cadp::emit_stage(z, std::nextafter(bottom, 0.0)) == 1);
        std::size_t prev = 1;
        for (int k = 1; k < 1000; ++k) {
            const auto p = cadp::emit_stage(z, k / 1000.0);
            CHECK(p >= prev);
            prev = p;
        }
    }
}

TEST_CASE("confidence loss worked examples") {
    const ThresholdGrid grid;
    const std::vector<double> c{0.3, 0.7};
    CHECK(cadp::conf_loss(std::vector<double>{0.95, 0.5}, std::vector<int>{1, 1}, c, grid, 1.0) ==
          doctest::Approx(2.7).epsilon(1e-12));
    CHECK(cadp::conf_loss(std::vector<double>{0.05, 0.5}, std::vector<int>{0, 1}, c, grid, 1.0) ==
          doctest::Approx(9.0).epsilon(1e-12));
    CHECK(testing::exhaustive_conf_min({0, 1}, c, grid, 1.0) == doctest::Approx(9.0).epsilon(1e-12));
    CHECK(testing::exhaustive_conf_min({1, 1}, c, grid, 1.0) == doctest::Approx(2.7).epsilon(1e-12));
    CHECK(cadp::conf_loss(std::vector<double>{0.92, 0.1}, std::vector<int>{0, 0}, c, grid, 0.0) ==
          doctest::Approx(2.7).epsilon(1e-12));
    CHECK_THROWS_AS((void)cadp::conf_loss(std::vector<double>{0.5}, std::vector<int>{1, 1}, c, grid, 1.0),
                    std::invalid_argument);
    CHECK_THROWS_AS((void)cadp::conf_loss(std::vector<double>{0.5, 0.5}, std::vector<int>{1}, c, grid, 1.0),
                    std::invalid_argument);
}

TEST_CASE("confidence loss lower bound") {
    const ThresholdGrid grid;
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> u(0.001, 0.999);
    for (int trial = 0; trial < 500; ++trial) {
        const auto inst = testing::random_instance(rng);
        std::vector<double> z(inst.c.size());
        for (auto& v : z) v = u(rng);
        const double bound = static_cast<double>(grid.size()) * inst.c[0];
        const double loss = cadp::conf_loss(z, inst.y, inst.c, grid, inst.lambda);
        CHECK(loss >= bound - 1e-12);
        const bool all_first = inst.c.size() == 1 || z[0] >= grid.t.back();
        const bool tight = all_first && inst.y[0] == 1;
        if (tight) CHECK(loss == doctest::Approx(bound).epsilon(1e-12));
        if (!tight && !all_first) CHECK(loss > bound);
    }
}

TEST_CASE("dynamic-program targets match exhaustive search") {
    std::mt19937_64 rng(3);
    const ThresholdGrid grid;
    for (int trial = 0; trial < 500; ++trial) {
        const auto inst = testing::random_instance(rng);
        const auto sol = cadp::solve_targets(inst.y, inst.c, grid, inst.lambda);
        CAPTURE(trial);
        CHECK(sol.loss == testing::exhaustive_conf_min(inst.y, inst.c, grid, inst.lambda));
        CHECK(sol.loss == cadp::conf_loss(sol.z, inst.y, inst.c, grid, inst.lambda));
        for (double v : sol.z) CHECK((v > 0.0 && v < 1.0));
    }
}

TEST_CASE("target solver boundary cases") {
    const ThresholdGrid grid;
    const std::vector<double> c{0.1, 0.2, 0.3, 0.4};
    const auto easy = cadp::solve_targets(std::vector<int>{1, 1, 1, 1}, c, grid, 1.0);
    CHECK(easy.z[0] > grid.t.back());

    const auto hard = cadp::solve_targets(std::vector<int>{0, 0, 0, 1}, c, grid, 50.0);
    for (std::size_t i = 0; i < 3; ++i) CHECK(hard.z[i] < grid.t.front());

    const std::vector<double> one{1.0};
    const auto single = cadp::solve_targets(std::vector<int>{0}, one, grid, 2.0);
    CHECK(single.loss == doctest::Approx(9.0 * 1.0 + 2.0 * 9.0));
    CHECK(single.z.size() == 1);

    const ThresholdGrid coarse = ThresholdGrid::parse("0.25,0.5,0.75");
    CHECK(coarse.representatives() == std::vector<double>{0.125, 0.375, 0.625, 0.875});
    CHECK_THROWS_AS(ThresholdGrid::parse("0.5,0.4"), std::invalid_argument);
    CHECK_THROWS_AS(ThresholdGrid::parse("0.5,1.0"), std::invalid_argument);
}

TEST_CASE("linear-approximation minimiser handles a smooth boxed problem") {
    const std::vector<double> lo{0.0, 0.0}, hi{1.0, 1.0};
    auto f = [](std::span<const double> x) {
        return (x[0] - 0.3) * (x[0] - 0.3) + (x[1] - 2.0) * (x[1] - 2.0);
    };
    cadp::LocalSolverOptions opt;
    opt.rho_end = 1e-7;
    const auto r = cadp::minimize_linear_approx(f, {0.9, 0.1}, lo, hi, opt);
    CHECK(r.x[0] == doctest::Approx(0.3).epsilon(1e-4));
    CHECK(r.x[1] == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("derivative-free targets agree with the dynamic program") {
    std::mt19937_64 rng(4);
    const ThresholdGrid grid;
    for (int trial = 0; trial < 150; ++trial) {
        const auto inst = testing::random_instance(rng);
        const auto dp = cadp::solve_targets(inst.y, inst.c, grid, inst.lambda);
        const auto local = cadp::solve_targets_local(inst.y, inst.c, grid, inst.lambda);
        CAPTURE(trial);
        CHECK(std::abs(local.loss - dp.loss) <= 1e-9);
        for (double v : local.z) CHECK((v > 0.0 && v < 1.0));
    }
}

namespace {

cadp::StageTable random_table(std::size_t images, std::size_t stages, std::size_t classes, std::uint64_t seed) {
    cadp::StageTable t;
    t.images = images;
    t.stages = stages;
    t.classes = classes;
    std::mt19937_64 rng(seed);
    std::normal_distribution<float> g(0.0f, 2.0f);
    t.logits.resize(images * stages * classes);
    for (auto& v : t.logits) v = g(rng);
    for (std::size_t i = 0; i < images; ++i) t.labels.push_back(static_cast<int>(i % classes));
    return t;
}

cadp::ControllerConfig small_cfg() {
    cadp::ControllerConfig cfg;
    cfg.hidden = 16;
    cfg.epochs = 3;
    cfg.batch_size = 10;
    cfg.lr = 0.1;
    return cfg;
}

}  // namespace

TEST_CASE("controller with zero parameters is neutral") {
    cadp::Controller ctrl(3, 8, 3, 0.2);
    std::mt19937_64 rng(0);
    const auto table = random_table(4, 2, 3, 5);
    std::vector<std::size_t> idx{0, 1, 2, 3};
    const auto steps = ctrl.forward(table.batch(idx), false, rng);
    for (const auto& s : steps) {
        for (float v : s.logits.data()) CHECK(v == 0.0f);
        for (float v : s.confidence.data()) CHECK(v == 0.5f);
    }
    CHECK_THROWS_AS((void)ctrl.forward({model::Tensorf(nn::Shape{2, 4})}, false, rng), nn::ShapeError);
}

TEST_CASE("controller outputs are per image") {
    cadp::Controller ctrl(3, 8, 3, 0.2);
    std::mt19937_64 init(1);
    ctrl.init(init);
    const auto table = random_table(6, 4, 3, 6);
    std::vector<std::size_t> idx{0, 1, 2, 3, 4, 5}, perm{4, 2, 5, 0, 3, 1};
    std::mt19937_64 rng(2);
    const auto a = ctrl.forward(table.batch(idx), false, rng);
    const auto b = ctrl.forward(table.batch(perm), false, rng);
    const auto again = ctrl.forward(table.batch(idx), false, rng);
    for (std::size_t m = 0; m < 4; ++m) {
        for (std::size_t r = 0; r < perm.size(); ++r) {
            CHECK(b[m].confidence.data()[r] == a[m].confidence.data()[perm[r]]);
            for (std::size_t k = 0; k < 3; ++k) CHECK(b[m].logits.data()[r * 3 + k] == a[m].logits.data()[perm[r] * 3 + k]);
        }
        for (std::size_t j = 0; j < a[m].logits.numel(); ++j) CHECK(again[m].logits.data()[j] == a[m].logits.data()[j]);
    }
}

TEST_CASE("controller configuration") {
    const cadp::ControllerConfig def;
    CHECK(def.lr == 0.5);
    CHECK(def.momentum == 0.0);
    CHECK(def.weight_decay == 0.0);
    CHECK(def.layers == 3);
    CHECK(def.switch_epoch() == 16);
    auto back = cadp::ControllerConfig::from_kv(def.to_kv());
    CHECK(back.to_kv().str() == def.to_kv().str());
    CHECK_THROWS_AS(cadp::ControllerConfig::from_kv(data::KeyValues::parse("alpha = -1\n")), data::ConfigError);
    CHECK_THROWS_AS(cadp::ControllerConfig::from_kv(data::KeyValues::parse("switch_fraction = 1.5\n")),
                    data::ConfigError);
    CHECK_THROWS_AS(cadp::ControllerConfig::from_kv(data::KeyValues::parse("thresholds = 0,0.5\n")),
                    data::ConfigError);
}

TEST_CASE("alpha zero leaves the confidence head untouched") {
    const auto table = random_table(40, 3, 3, 7);
    const auto cost = model::CostVector::from_macc({10, 20, 30});
    auto cfg = small_cfg();
    cfg.alpha = 0.0;
    auto res = cadp::train_controller(table, cost, cfg);
    cadp::Controller fresh(3, cfg);
    std::mt19937_64 rng(cfg.seed);
    fresh.init(rng);
    auto before = fresh.confidence_parameters();
    auto after = res.controller.confidence_parameters();
    for (std::size_t p = 0; p < before.size(); ++p)
        CHECK(std::equal(before[p]->tensor.data().begin(), before[p]->tensor.data().end(),
                         after[p]->tensor.data().begin()));
    auto cls_before = fresh.parameters(), cls_after = res.controller.parameters();
    CHECK_FALSE(std::equal(cls_before[0]->tensor.data().begin(), cls_before[0]->tensor.data().end(),
                           cls_after[0]->tensor.data().begin()));
}

TEST_CASE("target source switches after the configured fraction") {
    const auto table = random_table(30, 2, 3, 8);
    const auto cost = model::CostVector::from_macc({1, 3});
    auto cfg = small_cfg();
    cfg.epochs = 5;
    cfg.switch_fraction = 1.0;
    auto all_heads = cadp::train_controller(table, cost, cfg);
    for (const auto& h : all_heads.history) CHECK(h.head_targets);
    cfg.switch_fraction = 0.8;
    auto split = cadp::train_controller(table, cost, cfg);
    for (std::size_t e = 0; e < 5; ++e) CHECK(split.history[e].head_targets == (e < 4));
    cfg.every_stage_ce = false;
    CHECK_NOTHROW((void)cadp::train_controller(table, cost, cfg));
}

TEST_CASE("target cache is reused and gives identical results") {
    const auto dir = std::filesystem::temp_directory_path() / "prognet_cadp_cache";
    std::filesystem::create_directories(dir);
    const auto path = dir / "targets.bin";
    std::filesystem::remove(path);
    const auto table = random_table(30, 3, 3, 9);
    const auto cost = model::CostVector::from_macc({1, 2, 3});
    auto cfg = small_cfg();
    cadp::ControllerTrainOptions opt;
    opt.cache_path = path;
    opt.base_crc = 1234;
    auto first = cadp::train_controller(table, cost, cfg, opt);
    CHECK_FALSE(first.cache_hit);
    CHECK(first.solves == 30);
    auto second = cadp::train_controller(table, cost, cfg, opt);
    CHECK(second.cache_hit);
    CHECK(second.solves == 0);
    auto pa = first.controller.parameters(), pb = second.controller.parameters();
    for (std::size_t i = 0; i < pa.size(); ++i)
        CHECK(std::equal(pa[i]->tensor.data().begin(), pa[i]->tensor.data().end(), pb[i]->tensor.data().begin()));

    opt.base_crc = 99;
    CHECK_FALSE(cadp::train_controller(table, cost, cfg, opt).cache_hit);
    cfg.lambda = 2.0;
    CHECK_FALSE(cadp::train_controller(table, cost, cfg, opt).cache_hit);

    // Checkpoint round trip.
    auto params = second.controller.parameters();
    const auto ckpt = data::capture(params, cadp::controller_meta(small_cfg(), 3));
    auto loaded = cadp::load_controller(data::decode_checkpoint(data::encode_checkpoint(ckpt)));
    std::mt19937_64 rng(0);
    std::vector<std::size_t> idx{0, 1, 2};
    const auto a = second.controller.forward(table.batch(idx), false, rng);
    const auto b = loaded.forward(table.batch(idx), false, rng);
    for (std::size_t m = 0; m < a.size(); ++m)
        CHECK(std::equal(a[m].confidence.data().begin(), a[m].confidence.data().end(), b[m].confidence.data().begin()));
    std::filesystem::remove_all(dir);
}

TEST_CASE("confidence regression gap shrinks on a desk run") {
    data::SyntheticSpec spec;
    spec.samples_per_tier = 67;
    auto train = data::make_synthetic(spec, data::Split::train);
    std::vector<std::size_t> first(200);
    std::iota(first.begin(), first.end(), 0);
    train = train.subset(first);

    model::ProgNet net(model::NetworkConfig::preset("p2-mlp"));
    std::mt19937_64 rng(1);
    net.init(rng);
    model::TrainOptions topt;
    topt.epochs = 5;
    topt.batch_size = 20;
    topt.lr = 0.05;
    (void)model::train_base(net, train, train, topt);

    cadp::ControllerConfig cfg;
    cfg.hidden = 32;
    cfg.epochs = 20;
    cfg.switch_fraction = 1.0;
    const auto res = cadp::train_controller(net, train, cfg);
    REQUIRE(res.history.size() == 20);
    for (std::size_t e = 1; e < 20; ++e) {
        CAPTURE(e);
        CHECK(res.history[e].target_gap < res.history[e - 1].target_gap);
    }
}
