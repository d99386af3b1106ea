#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

namespace prognet::cadp {

// Early-termination thresholds, strictly increasing inside (0,1).
struct ThresholdGrid {
    std::vector<double> t{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};

    void validate() const;
    [[nodiscard]] std::size_t size() const { return t.size(); }
    // One value per bucket between consecutive thresholds: bucket q holds the
    // confidences that clear exactly the first q thresholds.
    [[nodiscard]] std::vector<double> representatives() const;
    static ThresholdGrid parse(const std::string& csv);
    [[nodiscard]] std::string str() const;
};

// First stage (1-based) whose confidence reaches t; the last stage always emits.
std::size_t emit_stage(std::span<const double> z, double t);

// Σ_t [ prefix cost up to p(t) + λ·(1 − ŷ_{p(t)}) ]
double conf_loss(std::span<const double> z, std::span<const int> correct, std::span<const double> c,
                 const ThresholdGrid& grid, double lambda);

struct TargetSolution {
    std::vector<double> z;
    double loss = 0.0;
};

// Exact minimiser: dynamic program over emit sequences that are non-decreasing
// in t, mapped back to bucket representatives.
TargetSolution solve_targets(std::span<const int> correct, std::span<const double> c,
                             const ThresholdGrid& grid, double lambda);

struct LocalSolverOptions {
    double rho_begin = 0.3;
    double rho_end = 1e-4;
    std::size_t max_evals = 4000;
};

// Derivative-free alternative: linear-approximation trust-region search from a
// lattice of starting points, returning the best box-feasible point found.
TargetSolution solve_targets_local(std::span<const int> correct, std::span<const double> c,
                                   const ThresholdGrid& grid, double lambda,
                                   const LocalSolverOptions& opt = {});

struct MinimizeResult {
    std::vector<double> x;
    double f = 0.0;
    std::size_t evals = 0;
};

// Minimises f over the box [lo, hi] with a simplex-based linear model and a
// shrinking trust radius.
MinimizeResult minimize_linear_approx(const std::function<double(std::span<const double>)>& f,
                                      std::vector<double> x0, std::span<const double> lo,
                                      std::span<const double> hi, const LocalSolverOptions& opt);

}  // namespace prognet::cadp
