#include "prognet/cadp/controller.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include "prognet/model/train.hpp"
#include "prognet/numerics/ops.hpp"

namespace prognet::cadp {

void ControllerConfig::validate() const {
    if (hidden == 0 || layers == 0) throw data::ConfigError("controller hidden size and layers must be positive");
    if (!(dropout >= 0.0 && dropout < 1.0)) throw data::ConfigError("controller dropout must be in [0,1)");
    if (!(alpha >= 0.0)) throw data::ConfigError("alpha must be non-negative");
    if (!(lambda >= 0.0)) throw data::ConfigError("lambda must be non-negative");
    if (!(switch_fraction >= 0.0 && switch_fraction <= 1.0))
        throw data::ConfigError("switch_fraction must be in [0,1]");
    if (epochs == 0 || batch_size == 0) throw data::ConfigError("controller epochs and batch must be positive");
    if (!(lr >= 0.0) || !(momentum >= 0.0) || !(weight_decay >= 0.0))
        throw data::ConfigError("controller optimizer settings must be non-negative");
    try {
        grid.validate();
    } catch (const std::invalid_argument& e) {
        throw data::ConfigError(e.what());
    }
}

std::size_t ControllerConfig::switch_epoch() const {
    return static_cast<std::size_t>(std::ceil(switch_fraction * static_cast<double>(epochs) - 1e-9));
}

ControllerConfig ControllerConfig::from_kv(const data::KeyValues& kv) {
    ControllerConfig c;
    c.hidden = static_cast<std::size_t>(kv.get_int("hidden", static_cast<long>(c.hidden)));
    c.layers = static_cast<std::size_t>(kv.get_int("layers", static_cast<long>(c.layers)));
    c.dropout = kv.get_double("dropout", c.dropout);
    c.alpha = kv.get_double("alpha", c.alpha);
    c.lambda = kv.get_double("lambda", c.lambda);
    c.epochs = static_cast<std::size_t>(kv.get_int("epochs", static_cast<long>(c.epochs)));
    c.switch_fraction = kv.get_double("switch_fraction", c.switch_fraction);
    c.batch_size = static_cast<std::size_t>(kv.get_int("batch", static_cast<long>(c.batch_size)));
    c.lr = kv.get_double("lr", c.lr);
    c.momentum = kv.get_double("momentum", c.momentum);
    c.weight_decay = kv.get_double("weight_decay", c.weight_decay);
    c.every_stage_ce = kv.get_int("every_stage_ce", c.every_stage_ce ? 1 : 0) != 0;
    if (kv.has("thresholds")) {
        try {
            c.grid = ThresholdGrid::parse(kv.get_string("thresholds"));
        } catch (const std::invalid_argument& e) {
            throw data::ConfigError(e.what());
        }
    }
    c.seed = static_cast<std::uint64_t>(kv.get_int("seed", static_cast<long>(c.seed)));
    c.validate();
    return c;
}

data::KeyValues ControllerConfig::to_kv() const {
    auto num = [](double v) {
        std::ostringstream os;
        os.precision(17);
        os << v;
        return os.str();
    };
    data::KeyValues kv;
    kv.set("hidden", std::to_string(hidden));
    kv.set("layers", std::to_string(layers));
    kv.set("dropout", num(dropout));
    kv.set("alpha", num(alpha));
    kv.set("lambda", num(lambda));
    kv.set("epochs", std::to_string(epochs));
    kv.set("switch_fraction", num(switch_fraction));
    kv.set("batch", std::to_string(batch_size));
    kv.set("lr", num(lr));
    kv.set("momentum", num(momentum));
    kv.set("weight_decay", num(weight_decay));
    kv.set("every_stage_ce", every_stage_ce ? "1" : "0");
    kv.set("thresholds", grid.str());
    kv.set("seed", std::to_string(seed));
    return kv;
}

Controller::Controller(std::size_t num_classes, std::size_t hidden, std::size_t layers, double dropout)
    : classes_(num_classes),
      lstm_(num_classes, hidden, layers, dropout),
      cls_w_("cls.w", {hidden, num_classes}),
      cls_b_("cls.b", {num_classes}),
      conf_w_("conf.w", {hidden, 1}),
      conf_b_("conf.b", {1}) {}

void Controller::init(std::mt19937_64& rng) {
    lstm_.init(rng);
    const double bound = 1.0 / std::sqrt(static_cast<double>(hidden()));
    nn::uniform_fill(cls_w_.tensor, bound, rng);
    nn::uniform_fill(conf_w_.tensor, bound, rng);
    for (auto* p : {&cls_b_, &conf_b_})
        for (auto& v : p->tensor.data()) v = 0.0f;
}

ControllerStep Controller::step(const Tensorf& stage_logits, nn::LstmState<float>& state, bool train,
                                std::mt19937_64& rng) const {
    if (stage_logits.rank() != 2 || stage_logits.dim(1) != classes_)
        throw nn::ShapeError("controller expects [B," + std::to_string(classes_) + "] logits, got " +
                             nn::shape_str(stage_logits.shape()));
    auto [h, next] = lstm_.step(stage_logits, state, train, rng);
    state = std::move(next);
    return {nn::linear(h, cls_w_.tensor, cls_b_.tensor),
            nn::sigmoid(nn::linear(h, conf_w_.tensor, conf_b_.tensor))};
}

std::vector<ControllerStep> Controller::forward(const std::vector<Tensorf>& stage_logits, bool train,
                                                std::mt19937_64& rng) const {
    if (stage_logits.empty()) throw std::invalid_argument("controller forward: no stages");
    auto state = start(stage_logits.front().dim(0));
    std::vector<ControllerStep> out;
    for (const auto& x : stage_logits) out.push_back(step(x, state, train, rng));
    return out;
}

std::vector<Param*> Controller::parameters() {
    auto out = lstm_.parameters();
    for (auto* p : {&cls_w_, &cls_b_, &conf_w_, &conf_b_}) out.push_back(p);
    return out;
}

std::vector<Param*> Controller::confidence_parameters() { return {&conf_w_, &conf_b_}; }

std::vector<int> StageTable::head_correct(std::size_t image) const {
    std::vector<int> out(stages);
    for (std::size_t m = 0; m < stages; ++m) {
        const auto r = row(image, m);
        const auto arg = std::max_element(r.begin(), r.end()) - r.begin();
        out[m] = arg == labels[image] ? 1 : 0;
    }
    return out;
}

std::vector<Tensorf> StageTable::batch(std::span<const std::size_t> images) const {
    std::vector<Tensorf> out;
    for (std::size_t m = 0; m < stages; ++m) {
        std::vector<float> buf;
        buf.reserve(images.size() * classes);
        for (auto i : images) {
            const auto r = row(i, m);
            buf.insert(buf.end(), r.begin(), r.end());
        }
        out.emplace_back(nn::Shape{images.size(), classes}, std::move(buf));
    }
    return out;
}

StageTable compute_stage_table(const model::ProgNet& net, const data::Dataset& ds, std::size_t batch) {
    nn::NoGradGuard no_grad;
    StageTable t;
    t.images = ds.size();
    t.stages = net.num_stages();
    t.classes = net.num_classes();
    t.labels = ds.labels;
    t.logits.resize(t.images * t.stages * t.classes);
    std::vector<std::size_t> idx;
    for (std::size_t start = 0; start < ds.size(); start += batch) {
        idx.resize(std::min(batch, ds.size() - start));
        std::iota(idx.begin(), idx.end(), start);
        const auto out = net.forward(ds.batch(idx));
        for (std::size_t m = 0; m < t.stages; ++m) {
            const auto src = out.logits[m].data();
            for (std::size_t b = 0; b < idx.size(); ++b)
                std::copy_n(src.begin() + static_cast<std::ptrdiff_t>(b * t.classes), t.classes,
                            t.logits.begin() + static_cast<std::ptrdiff_t>((idx[b] * t.stages + m) * t.classes));
        }
    }
    return t;
}

bool TargetCache::matches(std::uint32_t crc, double lam, const ThresholdGrid& g, std::span<const double> c,
                          std::size_t images) const {
    return base_crc == crc && lambda == lam && grid == g.t &&
           std::equal(costs.begin(), costs.end(), c.begin(), c.end()) && stages == c.size() &&
           z.size() == images * stages;
}

namespace {

constexpr char kCacheMagic[4] = {'P', 'G', 'T', 'C'};
constexpr std::uint32_t kCacheVersion = 1;

template <class V>
void put(std::ostream& os, V v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(V));
}

template <class V>
bool get(std::istream& is, V& v) {
    return static_cast<bool>(is.read(reinterpret_cast<char*>(&v), sizeof(V)));
}

void put_doubles(std::ostream& os, const std::vector<double>& xs) {
    put<std::uint64_t>(os, xs.size());
    for (double x : xs) put(os, x);
}

bool get_doubles(std::istream& is, std::vector<double>& xs, std::uint64_t limit) {
    std::uint64_t n = 0;
    if (!get(is, n) || n > limit) return false;
    xs.resize(n);
    for (auto& x : xs)
        if (!get(is, x)) return false;
    return true;
}

}  // namespace

// Layout (native little-endian): "PGTC" | u32 version | u32 base_crc | f64 lambda |
// u32 stages | doubles grid | doubles costs | doubles z, with doubles = u64 count + f64[count].
void save_target_cache(const TargetCache& cache, const std::filesystem::path& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot write target cache " + path.string());
    os.write(kCacheMagic, 4);
    put(os, kCacheVersion);
    put(os, cache.base_crc);
    put(os, cache.lambda);
    put<std::uint32_t>(os, static_cast<std::uint32_t>(cache.stages));
    put_doubles(os, cache.grid);
    put_doubles(os, cache.costs);
    put_doubles(os, cache.z);
    if (!os) throw std::runtime_error("failed writing target cache " + path.string());
}

std::optional<TargetCache> load_target_cache(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) return std::nullopt;
    char magic[4];
    std::uint32_t version = 0, stages = 0;
    TargetCache c;
    if (!is.read(magic, 4) || std::memcmp(magic, kCacheMagic, 4) != 0) return std::nullopt;
    if (!get(is, version) || version != kCacheVersion) return std::nullopt;
    if (!get(is, c.base_crc) || !get(is, c.lambda) || !get(is, stages)) return std::nullopt;
    c.stages = stages;
    const std::uint64_t limit = std::uint64_t{1} << 32;
    if (!get_doubles(is, c.grid, limit) || !get_doubles(is, c.costs, limit) || !get_doubles(is, c.z, limit))
        return std::nullopt;
    return c;
}

namespace {

Tensorf column(const std::vector<double>& z, std::span<const std::size_t> images, std::size_t stages,
               std::size_t m) {
    std::vector<float> buf;
    buf.reserve(images.size());
    for (auto i : images) buf.push_back(static_cast<float>(z[i * stages + m]));
    return Tensorf(nn::Shape{images.size(), 1}, std::move(buf));
}

struct EvalPass {
    std::vector<int> correct;  // [image][stage] from the controller's class outputs
    double gap = 0.0;
    double last_accuracy = 0.0;
};

EvalPass evaluate_controller(const Controller& ctrl, const StageTable& table, const std::vector<double>& z) {
    nn::NoGradGuard no_grad;
    std::mt19937_64 unused(0);
    EvalPass pass;
    pass.correct.assign(table.images * table.stages, 0);
    double gap = 0.0;
    std::size_t last_correct = 0;
    std::vector<std::size_t> idx;
    const std::size_t chunk = 500;
    for (std::size_t start = 0; start < table.images; start += chunk) {
        idx.resize(std::min(chunk, table.images - start));
        std::iota(idx.begin(), idx.end(), start);
        const auto steps = ctrl.forward(table.batch(idx), false, unused);
        for (std::size_t m = 0; m < table.stages; ++m) {
            const auto pred = nn::argmax_rows(steps[m].logits);
            const auto conf = steps[m].confidence.data();
            for (std::size_t b = 0; b < idx.size(); ++b) {
                const std::size_t i = idx[b];
                const int ok = pred[b] == table.labels[i] ? 1 : 0;
                pass.correct[i * table.stages + m] = ok;
                gap += std::abs(static_cast<double>(conf[b]) - z[i * table.stages + m]);
                if (m + 1 == table.stages) last_correct += static_cast<std::size_t>(ok);
            }
        }
    }
    pass.gap = gap / static_cast<double>(table.images * table.stages);
    pass.last_accuracy = static_cast<double>(last_correct) / static_cast<double>(table.images);
    return pass;
}

}  // namespace

ControllerResult train_controller(const StageTable& table, const model::CostVector& cost,
                                  const ControllerConfig& cfg, const ControllerTrainOptions& opt) {
    cfg.validate();
    if (table.images == 0) throw std::invalid_argument("controller training set is empty");
    if (cost.size() != table.stages) throw std::invalid_argument("cost vector does not match stage count");
    const std::size_t m_count = table.stages;
    const std::size_t n = table.images;

    ControllerResult res{Controller(table.classes, cfg), {}, 0, false};
    auto& ctrl = res.controller;
    std::mt19937_64 rng(cfg.seed);
    ctrl.init(rng);
    auto params = ctrl.parameters();

    // Head-based targets: cached across runs.
    std::vector<double> head_z;
    if (opt.cache_path) {
        if (auto cache = load_target_cache(*opt.cache_path);
            cache && cache->matches(opt.base_crc, cfg.lambda, cfg.grid, cost.c, n)) {
            head_z = cache->z;
            res.cache_hit = true;
        }
    }
    if (!res.cache_hit) {
        head_z.resize(n * m_count);
        for (std::size_t i = 0; i < n; ++i) {
            const auto sol = solve_targets(table.head_correct(i), cost.c, cfg.grid, cfg.lambda);
            std::copy(sol.z.begin(), sol.z.end(), head_z.begin() + static_cast<std::ptrdiff_t>(i * m_count));
            ++res.solves;
        }
        if (opt.cache_path)
            save_target_cache({opt.base_crc, cfg.lambda, cfg.grid.t, cost.c, m_count, head_z}, *opt.cache_path);
    }

    const double mid_t = cfg.grid.t[cfg.grid.size() / 2];
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::vector<double> own_z;
    const std::size_t switch_at = cfg.switch_epoch();
    const nn::SgdOptions sgd{cfg.lr, cfg.momentum, cfg.weight_decay};

    for (std::size_t e = 0; e < cfg.epochs; ++e) {
        const bool heads = e < switch_at;
        if (!heads) {
            // Correctness from the controller's own class outputs; one solve per pattern.
            const auto pass = evaluate_controller(ctrl, table, head_z);
            own_z.resize(n * m_count);
            std::map<std::vector<int>, std::vector<double>> memo;
            for (std::size_t i = 0; i < n; ++i) {
                std::vector<int> y(pass.correct.begin() + static_cast<std::ptrdiff_t>(i * m_count),
                                   pass.correct.begin() + static_cast<std::ptrdiff_t>((i + 1) * m_count));
                auto it = memo.find(y);
                if (it == memo.end()) it = memo.emplace(y, solve_targets(y, cost.c, cfg.grid, cfg.lambda).z).first;
                std::copy(it->second.begin(), it->second.end(),
                          own_z.begin() + static_cast<std::ptrdiff_t>(i * m_count));
            }
        }
        const auto& z = heads ? head_z : own_z;

        std::shuffle(order.begin(), order.end(), rng);
        double loss_sum = 0.0;
        std::size_t batches = 0;
        for (std::size_t start = 0; start < n; start += cfg.batch_size) {
            const std::span<const std::size_t> idx(order.data() + start, std::min(cfg.batch_size, n - start));
            std::vector<int> labels;
            for (auto i : idx) labels.push_back(table.labels[i]);
            try {
                const auto steps = ctrl.forward(table.batch(idx), true, rng);
                Tensorf loss;
                auto accumulate = [&](const Tensorf& term) { loss = loss.defined() ? nn::add(loss, term) : term; };
                for (std::size_t m = 0; m < m_count; ++m) {
                    if (cfg.every_stage_ce) {
                        accumulate(nn::cross_entropy(steps[m].logits, labels));
                    } else {
                        std::vector<Tensorf> rows;
                        std::vector<int> row_labels;
                        for (std::size_t b = 0; b < idx.size(); ++b) {
                            const std::span<const double> zi(z.data() + idx[b] * m_count, m_count);
                            if (emit_stage(zi, mid_t) == m + 1) {
                                rows.push_back(nn::slice(steps[m].logits, 0, b, 1));
                                row_labels.push_back(labels[b]);
                            }
                        }
                        if (!rows.empty())
                            accumulate(nn::scale(nn::cross_entropy(nn::concat(rows, 0), row_labels),
                                                 static_cast<float>(rows.size()) / static_cast<float>(idx.size())));
                    }
                    const auto gap = nn::mean(nn::abs(nn::sub(steps[m].confidence, column(z, idx, m_count, m))));
                    accumulate(nn::scale(gap, static_cast<float>(cfg.alpha)));
                }
                loss_sum += loss.item();
                loss.backward();
                // Class-head parameters may be untouched when only emitting stages are trained.
                for (auto* p : params)
                    if (!p->tensor.has_grad()) (void)p->tensor.mutable_grad();
                nn::sgd_step<float>(params, sgd);
            } catch (const nn::NonFiniteError& err) {
                throw model::DivergenceError("controller training diverged at epoch " + std::to_string(e + 1) +
                                             ": " + err.what());
            }
            ++batches;
        }

        const auto pass = evaluate_controller(ctrl, table, z);
        ControllerEpoch rec{e + 1, heads, loss_sum / static_cast<double>(batches), pass.gap, pass.last_accuracy};
        res.history.push_back(rec);
        if (opt.on_epoch) opt.on_epoch(rec);
    }
    return res;
}

ControllerResult train_controller(const model::ProgNet& net, const data::Dataset& train,
                                  const ControllerConfig& cfg, const ControllerTrainOptions& opt) {
    train.validate();
    if (train.num_classes != net.num_classes())
        throw std::invalid_argument("dataset classes do not match the base network");
    return train_controller(compute_stage_table(net, train), model::macc_count(net), cfg, opt);
}

data::CheckpointMeta controller_meta(const ControllerConfig& cfg, std::size_t num_classes) {
    auto kv = cfg.to_kv();
    kv.set("num_classes", std::to_string(num_classes));
    data::CheckpointMeta meta;
    meta.kind = "controller";
    meta.config_text = kv.str();
    meta.config_digest = data::digest_hex(meta.config_text);
    meta.epoch = static_cast<std::uint32_t>(cfg.epochs);
    return meta;
}

Controller load_controller(const data::Checkpoint& ckpt) {
    if (ckpt.meta.kind != "controller")
        throw data::CheckpointError("expected a controller checkpoint, found kind '" + ckpt.meta.kind + "'");
    const auto kv = data::KeyValues::parse(ckpt.meta.config_text);
    const auto cfg = ControllerConfig::from_kv(kv);
    Controller ctrl(static_cast<std::size_t>(kv.get_int("num_classes")), cfg);
    auto params = ctrl.parameters();
    data::restore(ckpt, params);
    return ctrl;
}

}  // namespace prognet::cadp
