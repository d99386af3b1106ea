#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "prognet/cadp/controller.hpp"
#include "prognet/data/dataset.hpp"
#include "prognet/model/network.hpp"

namespace prognet::policy {

struct PolicyMode {
    enum class Kind { dynamic, fixed, random };
    Kind kind = Kind::dynamic;
    double t = 0.5;          // dynamic
    std::size_t stage = 1;   // fixed, 1-based
    std::uint64_t seed = 1;  // random

    static PolicyMode dynamic(double t) { return {Kind::dynamic, t, 1, 1}; }
    static PolicyMode fixed(std::size_t m) { return {Kind::fixed, 0.5, m, 1}; }
    static PolicyMode random(std::uint64_t seed) { return {Kind::random, 0.5, 1, seed}; }

    // Throws std::invalid_argument when t ∉ (0,1) or m ∉ 1..stages.
    void validate(std::size_t stages) const;
    [[nodiscard]] std::string str() const;
};

struct StageTrace {
    std::size_t image = 0;
    std::vector<std::vector<float>> logits;  // stages 1..emit
    std::vector<double> confidence;          // stages 1..emit (dynamic only)
    std::size_t emit = 0;                    // 1-based
    int predicted = -1;
    int label = -1;
    bool correct = false;
    double cost = 0.0;
    int tier = -1;
};

// Everything a policy can look at for one image, all stages executed.
struct ImageRecord {
    std::vector<std::vector<float>> logits;  // per stage
    std::vector<double> confidence;          // per stage; empty without a controller
    std::vector<int> controller_pred;
    std::vector<int> head_pred;
    int label = -1;
    int tier = -1;
};

// Runs `fn(i, worker)` for i in [0, n) on up to `workers` threads. Work is split
// into contiguous blocks so results indexed by i do not depend on scheduling.
void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t, std::size_t)>& fn);

// The emit stage used by random mode for one image.
std::size_t random_stage(std::uint64_t seed, std::size_t image, std::size_t stages);

// Executes stages one at a time and stops at the emit stage. `ctrl` may be null
// for fixed and random modes.
StageTrace infer_one(const model::ProgNet& net, const cadp::Controller* ctrl, const data::Dataset& ds,
                     std::size_t image, const model::CostVector& cost, const PolicyMode& mode);

ImageRecord compute_record(const model::ProgNet& net, const cadp::Controller* ctrl, const data::Dataset& ds,
                           std::size_t image);
std::vector<ImageRecord> compute_records(const model::ProgNet& net, const cadp::Controller* ctrl,
                                         const data::Dataset& ds, std::size_t workers = 1);

// Applies a policy to a fully executed image; identical to infer_one.
StageTrace trace_from_record(const ImageRecord& rec, std::size_t image, const model::CostVector& cost,
                             const PolicyMode& mode);

// Count/sum aggregate; merging is associative and commutative.
struct Aggregate {
    std::size_t count = 0;
    std::size_t correct = 0;
    double cost_sum = 0.0;
    std::vector<std::size_t> hist;  // per emit stage

    explicit Aggregate(std::size_t stages = 0) : hist(stages, 0) {}
    void add(const StageTrace& tr);
    void merge(const Aggregate& other);
    [[nodiscard]] double accuracy() const { return count ? static_cast<double>(correct) / count : 0.0; }
    [[nodiscard]] double mean_cost() const { return count ? cost_sum / static_cast<double>(count) : 0.0; }
};

struct Evaluation {
    Aggregate agg;
    std::vector<StageTrace> traces;  // filled when requested
};

struct EvalOptions {
    std::size_t workers = 1;
    bool keep_traces = false;
};

Evaluation evaluate(const model::ProgNet& net, const cadp::Controller* ctrl, const data::Dataset& ds,
                    const PolicyMode& mode, const EvalOptions& opt = {});
Evaluation evaluate(const std::vector<ImageRecord>& records, const model::CostVector& cost,
                    const PolicyMode& mode, bool keep_traces = false);

struct SweepRow {
    double t = 0.0;
    double mean_cost = 0.0;
    double accuracy = 0.0;
    std::vector<std::size_t> hist;
    double wall_ms_mean = 0.0;
};

struct TimingOptions {
    bool enabled = false;
    std::size_t repeats = 5;  // per image, after one discarded warm-up run
};

// Median over repeats of single-image dynamic inference, averaged over images (ms).
double time_policy(const model::ProgNet& net, const cadp::Controller* ctrl, const data::Dataset& ds,
                   const model::CostVector& cost, const PolicyMode& mode, std::size_t repeats,
                   std::size_t max_images = 0);

std::vector<SweepRow> sweep(const std::vector<ImageRecord>& records, const model::CostVector& cost,
                            const cadp::ThresholdGrid& grid);
std::vector<SweepRow> sweep(const model::ProgNet& net, const cadp::Controller& ctrl, const data::Dataset& ds,
                            const cadp::ThresholdGrid& grid, std::size_t workers = 1,
                            const TimingOptions& timing = {});

struct RandomPoint {
    std::size_t trial = 0;
    double mean_cost = 0.0;
    double accuracy = 0.0;
};

std::vector<RandomPoint> random_baseline(const std::vector<ImageRecord>& records, const model::CostVector& cost,
                                         std::size_t trials, std::uint64_t seed);
std::vector<RandomPoint> random_baseline(const model::ProgNet& net, const data::Dataset& ds, std::size_t trials,
                                         std::uint64_t seed, std::size_t workers = 1);

// CSV: t,mean_cost,accuracy,emit_hist_1..emit_hist_M,wall_ms_mean
void write_sweep_csv(std::ostream& os, const std::vector<SweepRow>& rows, std::size_t stages);
// CSV: trial,mean_cost,accuracy
void write_random_csv(std::ostream& os, const std::vector<RandomPoint>& points);
// One JSON object per line; see README for the record schema.
void write_trace(std::ostream& os, const StageTrace& tr);

// Fixed-width decimal rendering used by every CSV writer.
std::string format_number(double v);

}  // namespace prognet::policy
