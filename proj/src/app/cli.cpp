#include "prognet/app/cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <random>
#include <sstream>

#include "CLI11.hpp"
#include "prognet/cadp/controller.hpp"
#include "prognet/data/cifar10.hpp"
#include "prognet/data/synthetic.hpp"
#include "prognet/model/train.hpp"
#include "prognet/policy/policy.hpp"

namespace prognet::app {

namespace fs = std::filesystem;
using policy::format_number;

namespace {

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct DataArgs {
    std::string cifar10;
    std::string synthetic;
};

struct Datasets {
    data::Dataset train, val;
};

struct Common {
    DataArgs data;
    std::string out = "out";
    std::size_t workers = 1;
};

void add_data_options(CLI::App* cmd, Common& c) {
    auto* cifar = cmd->add_option("--cifar10", c.data.cifar10,
                                  std::string("CIFAR-10 binary directory (default: $") + kDataDirEnv + ")");
    auto* syn = cmd->add_option("--synthetic", c.data.synthetic,
                                "synthetic dataset spec (key = value file), or 'default'");
    cifar->excludes(syn);
    cmd->add_option("--out", c.out, "output directory")->capture_default_str();
}

Datasets load_data(const DataArgs& args) {
    if (!args.synthetic.empty()) {
        data::SyntheticSpec spec;
        if (args.synthetic != "default") {
            if (!fs::is_regular_file(args.synthetic))
                throw UsageError("synthetic spec not found: " + args.synthetic);
            spec = data::SyntheticSpec::from_kv(data::KeyValues::load(args.synthetic));
        }
        return {data::make_synthetic(spec, data::Split::train), data::make_synthetic(spec, data::Split::val)};
    }
    std::string dir = args.cifar10;
    if (dir.empty()) {
        const char* env = std::getenv(kDataDirEnv);
        if (!env || !*env)
            throw UsageError(std::string("no dataset: pass --cifar10 DIR or --synthetic FILE, or set ") + kDataDirEnv);
        dir = env;
    }
    if (!fs::is_directory(dir)) throw UsageError("dataset directory not found: " + dir);
    auto [train, val] = data::cifar10::load(dir);
    return {std::move(train), std::move(val)};
}

void check_compatible(const model::NetworkConfig& cfg, const data::Dataset& ds) {
    if (cfg.input_shape != ds.image_shape || static_cast<std::size_t>(cfg.num_classes) != ds.num_classes)
        throw UsageError("network expects " + nn::shape_str(cfg.input_shape) + " images and " +
                         std::to_string(cfg.num_classes) + " classes, dataset provides " +
                         nn::shape_str(ds.image_shape) + " and " + std::to_string(ds.num_classes));
}

fs::path prepare_out(const std::string& out) {
    fs::path dir(out);
    fs::create_directories(dir);
    return dir;
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + path.string());
    f << text;
    if (!f) throw std::runtime_error("write failed: " + path.string());
}

bool is_flag(const CLI::Option* opt) { return opt->get_expected_max() == 0; }

// The subcommand's resolved options as `key = value` lines, readable back
// through --config.
void write_resolved(const fs::path& dir, const CLI::App* cmd) {
    data::KeyValues kv;
    for (const auto* opt : cmd->get_options()) {
        const auto name = opt->get_single_name();
        if (name == "help" || name == "config") continue;
        std::string value;
        if (is_flag(opt)) {
            value = opt->count() ? "true" : "false";
        } else if (opt->count()) {
            for (const auto& r : opt->results()) value += (value.empty() ? "" : ",") + r;
        } else {
            value = opt->get_default_str();
        }
        kv.set(name, value);
    }
    write_text(dir / (cmd->get_name() + ".config"), kv.str());
}

// Replaces `--config FILE` after the subcommand by the file's settings, placed
// ahead of the remaining arguments so explicit flags take precedence.
std::vector<std::string> expand_config(int argc, const char* const* argv, const CLI::App& app) {
    std::vector<std::string> in(argv, argv + argc);
    if (in.size() < 2) return in;
    const CLI::App* cmd = nullptr;
    try {
        cmd = app.get_subcommand(in[1]);
    } catch (const CLI::OptionNotFound&) {
        return in;
    }
    std::vector<std::string> head{in[0], in[1]}, injected, tail;
    for (std::size_t i = 2; i < in.size(); ++i) {
        std::string file;
        if (in[i] == "--config") {
            if (i + 1 >= in.size()) throw UsageError("--config needs a file");
            file = in[++i];
        } else if (in[i].rfind("--config=", 0) == 0) {
            file = in[i].substr(9);
        } else {
            tail.push_back(in[i]);
            continue;
        }
        if (!fs::is_regular_file(file)) throw UsageError("config file not found: " + file);
        const auto kv = data::KeyValues::load(file);
        for (const auto& [key, value] : kv.entries()) {
            const auto* opt = cmd->get_option_no_throw("--" + key);
            if (!opt || key == "config") throw UsageError("unknown key '" + key + "' in " + file);
            if (is_flag(opt)) {
                if (value == "true" || value == "1") injected.push_back("--" + key);
                else if (value != "false" && value != "0")
                    throw UsageError("key '" + key + "' in " + file + " must be true or false");
            } else if (!value.empty()) {
                injected.push_back("--" + key);
                injected.push_back(value);
            }
        }
    }
    head.insert(head.end(), injected.begin(), injected.end());
    head.insert(head.end(), tail.begin(), tail.end());
    return head;
}

model::ProgNet load_base(const std::string& path) {
    return model::load_network(data::load_checkpoint(path));
}

cadp::Controller load_ctrl(const std::string& path, const model::ProgNet& net) {
    auto ctrl = cadp::load_controller(data::load_checkpoint(path));
    if (ctrl.num_classes() != net.num_classes())
        throw UsageError("controller reads " + std::to_string(ctrl.num_classes()) + " classes, base network has " +
                         std::to_string(net.num_classes()));
    return ctrl;
}

cadp::ThresholdGrid parse_grid(const std::string& text) {
    try {
        return cadp::ThresholdGrid::parse(text);
    } catch (const std::exception& e) {
        throw UsageError(std::string("--thresholds: ") + e.what());
    }
}

// ---- train-base -------------------------------------------------------------

struct TrainBaseArgs {
    Common common;
    std::string preset = "p4-residual";
    std::string network;
    model::TrainOptions opt{.epochs = 60};
    bool no_augment = false;
    std::string crop = "pad";
};

void train_base_cmd(const CLI::App* cmd, const TrainBaseArgs& a, std::ostream& out, std::ostream& err) {
    auto sets = load_data(a.common.data);
    auto cfg = a.network.empty() ? model::NetworkConfig::preset(a.preset)
                                 : model::NetworkConfig::from_kv(data::KeyValues::load(a.network));
    check_compatible(cfg, sets.train);
    const auto dir = prepare_out(a.common.out);
    write_resolved(dir, cmd);
    write_text(dir / "network.txt", cfg.to_kv().str());

    auto opt = a.opt;
    opt.augment = !a.no_augment;
    opt.crop_mode = a.crop == "upsample" ? data::CropMode::upsample_crop : data::CropMode::pad_crop;
    err << "train-base: " << cfg.num_stages() << " stages, " << sets.train.size() << " training images, seed "
        << opt.seed << "\n";

    model::ProgNet net(cfg);
    std::mt19937_64 rng(opt.seed);
    net.init(rng);
    std::ostringstream csv;
    csv << "epoch,lr,train_loss";
    for (std::size_t m = 1; m <= cfg.num_stages(); ++m) csv << ",val_acc_" << m;
    csv << ",mean_accuracy\n";
    model::TrainHooks hooks;
    hooks.on_epoch = [&](const model::EpochMetrics& m) {
        csv << m.epoch << ',' << format_number(m.lr) << ',' << format_number(m.train_loss);
        for (double acc : m.val_accuracy) csv << ',' << format_number(acc);
        csv << ',' << format_number(m.mean_accuracy) << '\n';
        err << "  epoch " << m.epoch << '/' << opt.epochs << " loss " << format_number(m.train_loss)
            << " mean acc " << format_number(m.mean_accuracy) << "\n";
    };
    const auto res = model::train_base(net, sets.train, sets.val, opt, hooks);
    write_text(dir / "metrics.csv", csv.str());
    data::save_checkpoint(res.best, dir / "base.ckpt");

    const auto& best = res.history.at(res.best_epoch - 1);
    out << "best epoch " << res.best_epoch << ", per-stage validation accuracy";
    for (double acc : best.val_accuracy) out << ' ' << format_number(acc);
    out << "\ncheckpoint " << (dir / "base.ckpt").string() << "\n";
}

// ---- train-controller -------------------------------------------------------

struct TrainControllerArgs {
    Common common;
    std::string base;
    cadp::ControllerConfig cfg;
    std::string thresholds = cadp::ThresholdGrid{}.str();
    bool emit_only_ce = false;
};

void train_controller_cmd(const CLI::App* cmd, const TrainControllerArgs& a, std::ostream& out,
                          std::ostream& err) {
    auto sets = load_data(a.common.data);
    auto net = load_base(a.base);
    check_compatible(net.config(), sets.train);
    auto cfg = a.cfg;
    cfg.grid = parse_grid(a.thresholds);
    cfg.every_stage_ce = !a.emit_only_ce;
    try {
        cfg.validate();
    } catch (const std::exception& e) {
        throw UsageError(e.what());
    }
    const auto dir = prepare_out(a.common.out);
    write_resolved(dir, cmd);
    write_text(dir / "controller.txt", cfg.to_kv().str());

    cadp::ControllerTrainOptions opt;
    opt.cache_path = dir / "targets.cache";
    opt.base_crc = data::checkpoint_crc(a.base);
    std::ostringstream csv;
    csv << "epoch,head_targets,loss,target_gap,last_stage_accuracy\n";
    opt.on_epoch = [&](const cadp::ControllerEpoch& e) {
        csv << e.epoch << ',' << (e.head_targets ? 1 : 0) << ',' << format_number(e.loss) << ','
            << format_number(e.target_gap) << ',' << format_number(e.stage_accuracy_last) << '\n';
        err << "  epoch " << e.epoch << '/' << cfg.epochs << " loss " << format_number(e.loss) << " gap "
            << format_number(e.target_gap) << "\n";
    };
    err << "train-controller: hidden " << cfg.hidden << ", layers " << cfg.layers << ", seed " << cfg.seed << "\n";
    auto res = cadp::train_controller(net, sets.train, cfg, opt);
    write_text(dir / "controller_metrics.csv", csv.str());
    auto params = res.controller.parameters();
    data::save_checkpoint(data::capture(params, cadp::controller_meta(cfg, net.num_classes())),
                          dir / "controller.ckpt");
    if (res.cache_hit) out << "target cache reused (0 solves)\n";
    else out << "target solves: " << res.solves << "\n";
    out << "checkpoint " << (dir / "controller.ckpt").string() << "\n";
}

// ---- eval / sweep / bench / random-baseline ---------------------------------

struct PolicyArgs {
    Common common;
    std::string base;
    std::string controller;
    std::string thresholds = cadp::ThresholdGrid{}.str();
};

void add_policy_options(CLI::App* cmd, PolicyArgs& a, bool controller_required) {
    cmd->add_option("--base", a.base, "base network checkpoint")->required()->check(CLI::ExistingFile);
    auto* c = cmd->add_option("--controller", a.controller, "controller checkpoint")->check(CLI::ExistingFile);
    if (controller_required) c->required();
    cmd->add_option("--workers", a.common.workers, "parallel workers")->capture_default_str()->check(
        CLI::PositiveNumber);
    add_data_options(cmd, a.common);
}

struct EvalArgs {
    PolicyArgs p;
    std::string mode = "dynamic";
    double t = 0.5;
    std::size_t stage = 1;
    std::uint64_t seed = 1;
    bool traces = false;
};

void eval_cmd(const CLI::App* cmd, const EvalArgs& a, std::ostream& out) {
    auto sets = load_data(a.p.common.data);
    auto net = load_base(a.p.base);
    check_compatible(net.config(), sets.val);
    const auto grid = parse_grid(a.p.thresholds);

    policy::PolicyMode mode;
    if (a.mode == "dynamic") {
        mode = policy::PolicyMode::dynamic(a.t);
        mode.validate(net.num_stages());
        bool on_grid = false;
        for (double g : grid.t) on_grid = on_grid || std::abs(g - a.t) < 1e-12;
        if (!on_grid) throw UsageError("t=" + format_number(a.t) + " is not on the threshold grid {" + grid.str() + "}");
    } else if (a.mode == "fixed") {
        mode = policy::PolicyMode::fixed(a.stage);
    } else {
        mode = policy::PolicyMode::random(a.seed);
    }
    mode.validate(net.num_stages());
    std::optional<cadp::Controller> ctrl;
    if (!a.p.controller.empty()) ctrl = load_ctrl(a.p.controller, net);
    if (mode.kind == policy::PolicyMode::Kind::dynamic && !ctrl) throw UsageError("dynamic mode needs --controller");

    const auto dir = prepare_out(a.p.common.out);
    write_resolved(dir, cmd);
    const auto ev = policy::evaluate(net, ctrl ? &*ctrl : nullptr, sets.val, mode, {a.p.common.workers, a.traces});
    std::ostringstream csv;
    csv << "mode,mean_cost,accuracy";
    for (std::size_t m = 1; m <= net.num_stages(); ++m) csv << ",emit_hist_" << m;
    csv << "\n" << mode.str() << ',' << format_number(ev.agg.mean_cost()) << ',' << format_number(ev.agg.accuracy());
    for (auto h : ev.agg.hist) csv << ',' << h;
    csv << '\n';
    write_text(dir / "eval.csv", csv.str());
    if (a.traces) {
        std::ostringstream nd;
        for (const auto& tr : ev.traces) policy::write_trace(nd, tr);
        write_text(dir / "traces.ndjson", nd.str());
    }
    out << mode.str() << ": accuracy " << format_number(ev.agg.accuracy()) << ", mean cost "
        << format_number(ev.agg.mean_cost()) << "\n";
}

struct SweepArgs {
    PolicyArgs p;
    bool timing = false;
    std::size_t repeats = 5;
};

void sweep_cmd(const CLI::App* cmd, const SweepArgs& a, std::ostream& out) {
    auto sets = load_data(a.p.common.data);
    auto net = load_base(a.p.base);
    check_compatible(net.config(), sets.val);
    const auto grid = parse_grid(a.p.thresholds);
    const auto ctrl = load_ctrl(a.p.controller, net);
    const auto dir = prepare_out(a.p.common.out);
    write_resolved(dir, cmd);
    const auto rows = policy::sweep(net, ctrl, sets.val, grid, a.p.common.workers, {a.timing, a.repeats});
    std::ostringstream csv;
    policy::write_sweep_csv(csv, rows, net.num_stages());
    write_text(dir / "sweep.csv", csv.str());
    out << csv.str();
}

struct BenchArgs {
    PolicyArgs p;
    std::size_t repeats = 5;
    std::size_t limit = 200;
};

void bench_cmd(const CLI::App* cmd, const BenchArgs& a, std::ostream& out) {
    auto sets = load_data(a.p.common.data);
    auto net = load_base(a.p.base);
    check_compatible(net.config(), sets.val);
    const auto grid = parse_grid(a.p.thresholds);
    const auto ctrl = load_ctrl(a.p.controller, net);
    const auto dir = prepare_out(a.p.common.out);
    write_resolved(dir, cmd);

    const auto cost = model::macc_count(net);
    const auto records = policy::compute_records(net, &ctrl, sets.val, a.p.common.workers);
    std::vector<policy::PolicyMode> modes;
    for (std::size_t m = 1; m <= net.num_stages(); ++m) modes.push_back(policy::PolicyMode::fixed(m));
    for (double t : grid.t) modes.push_back(policy::PolicyMode::dynamic(t));
    std::ostringstream csv;
    csv << "mode,mean_cost,accuracy,wall_ms_mean\n";
    for (const auto& mode : modes) {
        const auto ev = policy::evaluate(records, cost, mode);
        const double ms = policy::time_policy(net, &ctrl, sets.val, cost, mode, a.repeats, a.limit);
        csv << mode.str() << ',' << format_number(ev.agg.mean_cost()) << ',' << format_number(ev.agg.accuracy())
            << ',' << format_number(ms) << '\n';
    }
    write_text(dir / "bench.csv", csv.str());
    out << csv.str();
}

struct RandomArgs {
    PolicyArgs p;
    std::size_t trials = 1000;
    std::uint64_t seed = 1;
};

void random_cmd(const CLI::App* cmd, const RandomArgs& a, std::ostream& out) {
    auto sets = load_data(a.p.common.data);
    auto net = load_base(a.p.base);
    check_compatible(net.config(), sets.val);
    const auto dir = prepare_out(a.p.common.out);
    write_resolved(dir, cmd);
    const auto points = policy::random_baseline(net, sets.val, a.trials, a.seed, a.p.common.workers);
    std::ostringstream csv;
    policy::write_random_csv(csv, points);
    write_text(dir / "random.csv", csv.str());
    out << points.size() << " random trials written to " << (dir / "random.csv").string() << "\n";
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Progressive networks with a confidence-driven early-exit controller"};
    app.name("prognet");
    app.require_subcommand(1);
    // Settings from --config come first; a later flag replaces them.
    app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);

    TrainBaseArgs tb;
    auto* c_tb = app.add_subcommand("train-base", "jointly train all stages of a base network");
    c_tb->add_option("--config", "read options from a key = value file; flags override it");
    add_data_options(c_tb, tb.common);
    c_tb->add_option("--preset", tb.preset, "network preset")->capture_default_str();
    c_tb->add_option("--network", tb.network, "network config file (overrides --preset)")->check(CLI::ExistingFile);
    c_tb->add_option("--epochs", tb.opt.epochs)->capture_default_str()->check(CLI::PositiveNumber);
    c_tb->add_option("--batch", tb.opt.batch_size)->capture_default_str()->check(CLI::PositiveNumber);
    c_tb->add_option("--lr", tb.opt.lr)->capture_default_str()->check(CLI::NonNegativeNumber);
    c_tb->add_option("--momentum", tb.opt.momentum)->capture_default_str()->check(CLI::Range(0.0, 1.0));
    c_tb->add_option("--weight-decay", tb.opt.weight_decay)->capture_default_str()->check(CLI::NonNegativeNumber);
    c_tb->add_option("--seed", tb.opt.seed)->capture_default_str();
    c_tb->add_flag("--no-augment", tb.no_augment, "disable crop/flip augmentation");
    c_tb->add_option("--crop", tb.crop, "crop mode for 32x32 images")
        ->capture_default_str()
        ->check(CLI::IsMember({"pad", "upsample"}));

    TrainControllerArgs tc;
    auto* c_tc = app.add_subcommand("train-controller", "fit the early-exit controller on a frozen base");
    c_tc->add_option("--config", "read options from a key = value file; flags override it");
    add_data_options(c_tc, tc.common);
    c_tc->add_option("--base", tc.base, "base network checkpoint")->required()->check(CLI::ExistingFile);
    c_tc->add_option("--hidden", tc.cfg.hidden)->capture_default_str()->check(CLI::PositiveNumber);
    c_tc->add_option("--layers", tc.cfg.layers)->capture_default_str()->check(CLI::PositiveNumber);
    c_tc->add_option("--dropout", tc.cfg.dropout)->capture_default_str();
    c_tc->add_option("--alpha", tc.cfg.alpha, "confidence loss weight")->capture_default_str();
    c_tc->add_option("--lambda", tc.cfg.lambda, "accuracy penalty in the target solve")->capture_default_str();
    c_tc->add_option("--epochs", tc.cfg.epochs)->capture_default_str()->check(CLI::PositiveNumber);
    c_tc->add_option("--switch", tc.cfg.switch_fraction,
                     "fraction of epochs taking correctness from the evaluation heads")
        ->capture_default_str();
    c_tc->add_option("--batch", tc.cfg.batch_size)->capture_default_str()->check(CLI::PositiveNumber);
    c_tc->add_option("--lr", tc.cfg.lr)->capture_default_str();
    c_tc->add_option("--momentum", tc.cfg.momentum)->capture_default_str();
    c_tc->add_option("--weight-decay", tc.cfg.weight_decay)->capture_default_str();
    c_tc->add_option("--thresholds", tc.thresholds, "threshold grid, comma separated")->capture_default_str();
    c_tc->add_flag("--emit-only-ce", tc.emit_only_ce, "cross-entropy only at the emitting stage");
    c_tc->add_option("--seed", tc.cfg.seed)->capture_default_str();

    EvalArgs ev;
    auto* c_ev = app.add_subcommand("eval", "evaluate one policy on the validation split");
    c_ev->add_option("--config", "read options from a key = value file; flags override it");
    add_policy_options(c_ev, ev.p, false);
    c_ev->add_option("--mode", ev.mode)->capture_default_str()->check(CLI::IsMember({"dynamic", "fixed", "random"}));
    c_ev->add_option("--t", ev.t, "dynamic threshold (must lie on the grid)")->capture_default_str();
    c_ev->add_option("--stage", ev.stage, "fixed exit stage (1-based)")->capture_default_str();
    c_ev->add_option("--seed", ev.seed, "random-mode seed")->capture_default_str();
    c_ev->add_option("--thresholds", ev.p.thresholds, "threshold grid")->capture_default_str();
    c_ev->add_flag("--traces", ev.traces, "write per-image traces as NDJSON");

    SweepArgs sw;
    auto* c_sw = app.add_subcommand("sweep", "accuracy/cost curve over the threshold grid");
    c_sw->add_option("--config", "read options from a key = value file; flags override it");
    add_policy_options(c_sw, sw.p, true);
    c_sw->add_option("--thresholds", sw.p.thresholds, "threshold grid")->capture_default_str();
    c_sw->add_flag("--timing", sw.timing, "also measure per-image wall-clock time");
    c_sw->add_option("--repeats", sw.repeats, "timed runs per image")->capture_default_str()->check(
        CLI::PositiveNumber);

    BenchArgs bn;
    auto* c_bn = app.add_subcommand("bench", "wall-clock report for fixed and dynamic policies");
    c_bn->add_option("--config", "read options from a key = value file; flags override it");
    add_policy_options(c_bn, bn.p, true);
    c_bn->add_option("--thresholds", bn.p.thresholds, "threshold grid")->capture_default_str();
    c_bn->add_option("--repeats", bn.repeats, "timed runs per image")->capture_default_str()->check(
        CLI::PositiveNumber);
    c_bn->add_option("--limit", bn.limit, "images timed per policy (0 = all)")->capture_default_str();

    RandomArgs rb;
    auto* c_rb = app.add_subcommand("random-baseline", "point cloud of the uniform random-exit policy");
    c_rb->add_option("--config", "read options from a key = value file; flags override it");
    add_policy_options(c_rb, rb.p, false);
    c_rb->add_option("--trials", rb.trials)->capture_default_str()->check(CLI::PositiveNumber);
    c_rb->add_option("--seed", rb.seed)->capture_default_str();

    try {
        auto args = expand_config(argc, argv, app);
        std::reverse(args.begin(), args.end());
        args.pop_back();
        app.parse(args);
    } catch (const CLI::ParseError& e) {
        return app.exit(e, out, err) == 0 ? 0 : 2;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 2;
    }

    try {
        if (c_tb->parsed()) train_base_cmd(c_tb, tb, out, err);
        else if (c_tc->parsed()) train_controller_cmd(c_tc, tc, out, err);
        else if (c_ev->parsed()) eval_cmd(c_ev, ev, out);
        else if (c_sw->parsed()) sweep_cmd(c_sw, sw, out);
        else if (c_bn->parsed()) bench_cmd(c_bn, bn, out);
        else if (c_rb->parsed()) random_cmd(c_rb, rb, out);
        return 0;
    } catch (const UsageError& e) {
        err << "error: " << e.what() << "\n";
        return 2;
    } catch (const data::ConfigError& e) {
        err << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::invalid_argument& e) {
        err << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        err << "failed: " << e.what() << "\n";
        return 1;
    }
}

}  // namespace prognet::app
