#include "prognet/policy/policy.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <ostream>
#include <stdexcept>
#include <thread>

#include "json.hpp"
#include "prognet/numerics/ops.hpp"

namespace prognet::policy {

using model::Tensorf;

void PolicyMode::validate(std::size_t stages) const {
    switch (kind) {
        case Kind::dynamic:
            if (!(t > 0.0 && t < 1.0))
                throw std::invalid_argument("threshold t=" + format_number(t) + " must lie in (0,1)");
            break;
        case Kind::fixed:
            if (stage < 1 || stage > stages)
                throw std::invalid_argument("fixed stage m=" + std::to_string(stage) + " must lie in 1.." +
                                            std::to_string(stages));
            break;
        case Kind::random:
            break;
    }
}

std::string PolicyMode::str() const {
    switch (kind) {
        case Kind::dynamic: return "dynamic(t=" + format_number(t) + ")";
        case Kind::fixed: return "fixed(m=" + std::to_string(stage) + ")";
        case Kind::random: return "random(seed=" + std::to_string(seed) + ")";
    }
    return "?";
}

void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t, std::size_t)>& fn) {
    workers = std::max<std::size_t>(1, std::min(workers, n));
    if (workers == 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i, 0);
        return;
    }
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(workers);
    const std::size_t block = (n + workers - 1) / workers;
    for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&, w] {
            nn::NoGradGuard no_grad;
            try {
                for (std::size_t i = w * block; i < std::min(n, (w + 1) * block); ++i) fn(i, w);
            } catch (...) {
                errors[w] = std::current_exception();
            }
        });
    }
    for (auto& th : pool) th.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

int argmax(std::span<const float> v) {
    return static_cast<int>(std::max_element(v.begin(), v.end()) - v.begin());
}

Tensorf single_image(const data::Dataset& ds, std::size_t image) {
    nn::Shape shape{1};
    shape.insert(shape.end(), ds.image_shape.begin(), ds.image_shape.end());
    return Tensorf(std::move(shape), ds.image(image));
}

void check_widths(const model::ProgNet& net, const cadp::Controller* ctrl) {
    if (ctrl && ctrl->num_classes() != net.num_classes())
        throw std::invalid_argument("controller expects " + std::to_string(ctrl->num_classes()) +
                                    " classes, network produces " + std::to_string(net.num_classes()));
}

}  // namespace

std::size_t random_stage(std::uint64_t seed, std::size_t image, std::size_t stages) {
    const std::uint64_t h = splitmix64(seed ^ splitmix64(image));
    const double u = static_cast<double>(h >> 11) * 0x1.0p-53;
    return std::min(stages, static_cast<std::size_t>(u * static_cast<double>(stages)) + 1);
}

StageTrace infer_one(const model::ProgNet& net, const cadp::Controller* ctrl, const data::Dataset& ds,
                     std::size_t image, const model::CostVector& cost, const PolicyMode& mode) {
    const std::size_t stages = net.num_stages();
    mode.validate(stages);
    check_widths(net, ctrl);
    if (mode.kind == PolicyMode::Kind::dynamic && !ctrl)
        throw std::invalid_argument("dynamic mode needs a controller");
    nn::NoGradGuard no_grad;
    StageTrace tr;
    tr.image = image;
    tr.label = ds.labels.at(image);
    tr.tier = ds.tiers.empty() ? -1 : ds.tiers[image];

    std::size_t target = stages;
    if (mode.kind == PolicyMode::Kind::fixed) target = mode.stage;
    if (mode.kind == PolicyMode::Kind::random) target = random_stage(mode.seed, image, stages);

    model::Runner runner(net, single_image(ds, image));
    std::optional<nn::LstmState<float>> state;
    std::mt19937_64 unused(0);
    if (ctrl && mode.kind == PolicyMode::Kind::dynamic) state = ctrl->start(1);
    for (std::size_t m = 1; m <= target; ++m) {
        const auto logits = runner.step();
        tr.logits.emplace_back(logits.data().begin(), logits.data().end());
        if (state) {
            const auto out = ctrl->step(logits, *state, false, unused);
            tr.confidence.push_back(static_cast<double>(out.confidence.item()));
            if (tr.confidence.back() >= mode.t || m == stages) {
                tr.emit = m;
                tr.predicted = argmax(out.logits.data());
                break;
            }
        } else if (m == target) {
            tr.emit = m;
            tr.predicted = argmax(logits.data());
        }
    }
    tr.correct = tr.predicted == tr.label;
    tr.cost = cost.prefix(tr.emit);
    return tr;
}

ImageRecord compute_record(const model::ProgNet& net, const cadp::Controller* ctrl, const data::Dataset& ds,
                           std::size_t image) {
    check_widths(net, ctrl);
    nn::NoGradGuard no_grad;
    ImageRecord rec;
    rec.label = ds.labels.at(image);
    rec.tier = ds.tiers.empty() ? -1 : ds.tiers[image];
    model::Runner runner(net, single_image(ds, image));
    std::optional<nn::LstmState<float>> state;
    std::mt19937_64 unused(0);
    if (ctrl) state = ctrl->start(1);
    for (std::size_t m = 0; m < net.num_stages(); ++m) {
        const auto logits = runner.step();
        rec.logits.emplace_back(logits.data().begin(), logits.data().end());
        rec.head_pred.push_back(argmax(logits.data()));
        if (state) {
            const auto out = ctrl->step(logits, *state, false, unused);
            rec.confidence.push_back(static_cast<double>(out.confidence.item()));
            rec.controller_pred.push_back(argmax(out.logits.data()));
        }
    }
    return rec;
}

std::vector<ImageRecord> compute_records(const model::ProgNet& net, const cadp::Controller* ctrl,
                                         const data::Dataset& ds, std::size_t workers) {
    std::vector<ImageRecord> out(ds.size());
    parallel_for(ds.size(), workers, [&](std::size_t i, std::size_t) { out[i] = compute_record(net, ctrl, ds, i); });
    return out;
}

namespace {

struct Decision {
    std::size_t emit = 0;
    int predicted = -1;
};

Decision decide(const ImageRecord& rec, std::size_t image, const PolicyMode& mode) {
    const std::size_t stages = rec.logits.size();
    Decision d;
    switch (mode.kind) {
        case PolicyMode::Kind::dynamic:
            if (rec.confidence.size() != stages) throw std::invalid_argument("dynamic mode needs controller outputs");
            d.emit = cadp::emit_stage(rec.confidence, mode.t);
            d.predicted = rec.controller_pred[d.emit - 1];
            break;
        case PolicyMode::Kind::fixed:
            d.emit = mode.stage;
            d.predicted = rec.head_pred[d.emit - 1];
            break;
        case PolicyMode::Kind::random:
            d.emit = random_stage(mode.seed, image, stages);
            d.predicted = rec.head_pred[d.emit - 1];
            break;
    }
    return d;
}

}  // namespace

StageTrace trace_from_record(const ImageRecord& rec, std::size_t image, const model::CostVector& cost,
                             const PolicyMode& mode) {
    mode.validate(rec.logits.size());
    const auto d = decide(rec, image, mode);
    StageTrace tr;
    tr.image = image;
    tr.label = rec.label;
    tr.tier = rec.tier;
    tr.emit = d.emit;
    tr.predicted = d.predicted;
    tr.logits.assign(rec.logits.begin(), rec.logits.begin() + static_cast<std::ptrdiff_t>(tr.emit));
    if (mode.kind == PolicyMode::Kind::dynamic)
        tr.confidence.assign(rec.confidence.begin(), rec.confidence.begin() + static_cast<std::ptrdiff_t>(tr.emit));
    tr.correct = tr.predicted == tr.label;
    tr.cost = cost.prefix(tr.emit);
    return tr;
}

void Aggregate::add(const StageTrace& tr) {
    ++count;
    if (tr.correct) ++correct;
    cost_sum += tr.cost;
    hist.at(tr.emit - 1) += 1;
}

void Aggregate::merge(const Aggregate& other) {
    if (hist.size() != other.hist.size()) throw std::invalid_argument("aggregates over different stage counts");
    count += other.count;
    correct += other.correct;
    cost_sum += other.cost_sum;
    for (std::size_t i = 0; i < hist.size(); ++i) hist[i] += other.hist[i];
}

Evaluation evaluate(const model::ProgNet& net, const cadp::Controller* ctrl, const data::Dataset& ds,
                    const PolicyMode& mode, const EvalOptions& opt) {
    if (ds.size() == 0) throw std::invalid_argument("evaluation dataset is empty");
    mode.validate(net.num_stages());
    const auto cost = model::macc_count(net);
    std::vector<StageTrace> traces(ds.size());
    parallel_for(ds.size(), opt.workers,
                 [&](std::size_t i, std::size_t) { traces[i] = infer_one(net, ctrl, ds, i, cost, mode); });
    // Sum in image order so the cost total does not depend on the worker count.
    Evaluation ev{Aggregate(net.num_stages()), {}};
    for (const auto& tr : traces) ev.agg.add(tr);
    if (opt.keep_traces) ev.traces = std::move(traces);
    return ev;
}

Evaluation evaluate(const std::vector<ImageRecord>& records, const model::CostVector& cost,
                    const PolicyMode& mode, bool keep_traces) {
    if (records.empty()) throw std::invalid_argument("evaluation dataset is empty");
    mode.validate(cost.size());
    Evaluation ev{Aggregate(cost.size()), {}};
    for (std::size_t i = 0; i < records.size(); ++i) {
        if (keep_traces) {
            ev.traces.push_back(trace_from_record(records[i], i, cost, mode));
            ev.agg.add(ev.traces.back());
            continue;
        }
        const auto d = decide(records[i], i, mode);
        ++ev.agg.count;
        if (d.predicted == records[i].label) ++ev.agg.correct;
        ev.agg.cost_sum += cost.prefix(d.emit);
        ev.agg.hist.at(d.emit - 1) += 1;
    }
    return ev;
}

double time_policy(const model::ProgNet& net, const cadp::Controller* ctrl, const data::Dataset& ds,
                   const model::CostVector& cost, const PolicyMode& mode, std::size_t repeats,
                   std::size_t max_images) {
    using clock = std::chrono::steady_clock;
    const std::size_t n = max_images ? std::min(max_images, ds.size()) : ds.size();
    if (n == 0 || repeats == 0) return 0.0;
    double total = 0.0;
    std::vector<double> runs(repeats);
    for (std::size_t i = 0; i < n; ++i) {
        (void)infer_one(net, ctrl, ds, i, cost, mode);
        for (auto& r : runs) {
            const auto start = clock::now();
            (void)infer_one(net, ctrl, ds, i, cost, mode);
            r = std::chrono::duration<double, std::milli>(clock::now() - start).count();
        }
        std::sort(runs.begin(), runs.end());
        total += runs[repeats / 2];
    }
    return total / static_cast<double>(n);
}

std::vector<SweepRow> sweep(const std::vector<ImageRecord>& records, const model::CostVector& cost,
                            const cadp::ThresholdGrid& grid) {
    grid.validate();
    std::vector<SweepRow> rows;
    for (double t : grid.t) {
        const auto ev = evaluate(records, cost, PolicyMode::dynamic(t));
        rows.push_back({t, ev.agg.mean_cost(), ev.agg.accuracy(), ev.agg.hist, 0.0});
    }
    return rows;
}

std::vector<SweepRow> sweep(const model::ProgNet& net, const cadp::Controller& ctrl, const data::Dataset& ds,
                            const cadp::ThresholdGrid& grid, std::size_t workers, const TimingOptions& timing) {
    const auto cost = model::macc_count(net);
    auto rows = sweep(compute_records(net, &ctrl, ds, workers), cost, grid);
    if (timing.enabled)
        for (auto& row : rows)
            row.wall_ms_mean = time_policy(net, &ctrl, ds, cost, PolicyMode::dynamic(row.t), timing.repeats);
    return rows;
}

std::vector<RandomPoint> random_baseline(const std::vector<ImageRecord>& records, const model::CostVector& cost,
                                         std::size_t trials, std::uint64_t seed) {
    if (trials == 0) throw std::invalid_argument("random baseline needs at least one trial");
    std::vector<RandomPoint> out;
    for (std::size_t k = 0; k < trials; ++k) {
        const auto ev = evaluate(records, cost, PolicyMode::random(splitmix64(seed + k)));
        out.push_back({k + 1, ev.agg.mean_cost(), ev.agg.accuracy()});
    }
    return out;
}

std::vector<RandomPoint> random_baseline(const model::ProgNet& net, const data::Dataset& ds, std::size_t trials,
                                         std::uint64_t seed, std::size_t workers) {
    return random_baseline(compute_records(net, nullptr, ds, workers), model::macc_count(net), trials, seed);
}

std::string format_number(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

void write_sweep_csv(std::ostream& os, const std::vector<SweepRow>& rows, std::size_t stages) {
    os << "t,mean_cost,accuracy";
    for (std::size_t m = 1; m <= stages; ++m) os << ",emit_hist_" << m;
    os << ",wall_ms_mean\n";
    for (const auto& r : rows) {
        os << format_number(r.t) << ',' << format_number(r.mean_cost) << ',' << format_number(r.accuracy);
        for (auto h : r.hist) os << ',' << h;
        os << ',' << format_number(r.wall_ms_mean) << '\n';
    }
}

void write_random_csv(std::ostream& os, const std::vector<RandomPoint>& points) {
    os << "trial,mean_cost,accuracy\n";
    for (const auto& p : points)
        os << p.trial << ',' << format_number(p.mean_cost) << ',' << format_number(p.accuracy) << '\n';
}

void write_trace(std::ostream& os, const StageTrace& tr) {
    nlohmann::json j;
    j["v"] = 1;
    j["image"] = tr.image;
    j["emit"] = tr.emit;
    j["predicted"] = tr.predicted;
    j["label"] = tr.label;
    j["correct"] = tr.correct;
    j["cost"] = tr.cost;
    if (tr.tier >= 0) j["tier"] = tr.tier;
    j["logits"] = tr.logits;
    if (!tr.confidence.empty()) j["confidence"] = tr.confidence;
    os << j.dump() << '\n';
}

}  // namespace prognet::policy
