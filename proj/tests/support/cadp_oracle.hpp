#pragma once

#include <limits>
#include <random>
#include <vector>

#include "prognet/cadp/targets.hpp"

namespace testing {

// Minimum of conf_loss over every combination of bucket values, one per stage.
inline double exhaustive_conf_min(const std::vector<int>& y, const std::vector<double>& c,
                                  const prognet::cadp::ThresholdGrid& grid, double lambda) {
    const auto& t = grid.t;
    std::vector<double> values;
    values.push_back(t.front() / 2);
    for (std::size_t k = 1; k < t.size(); ++k) values.push_back((t[k - 1] + t[k]) / 2);
    values.push_back((t.back() + 1) / 2);

    const std::size_t m = c.size();
    std::vector<std::size_t> digit(m, 0);
    std::vector<double> z(m);
    double best = std::numeric_limits<double>::infinity();
    while (true) {
        for (std::size_t i = 0; i < m; ++i) z[i] = values[digit[i]];
        best = std::min(best, prognet::cadp::conf_loss(z, y, c, grid, lambda));
        std::size_t i = 0;
        while (i < m && ++digit[i] == values.size()) digit[i++] = 0;
        if (i == m) break;
    }
    return best;
}

struct TargetInstance {
    std::vector<int> y;
    std::vector<double> c;
    double lambda = 1.0;
};

// Random M in 1..max_m, c on the simplex, binary y, lambda from {0.1, 1, 10}.
inline TargetInstance random_instance(std::mt19937_64& rng, std::size_t max_m = 4) {
    TargetInstance inst;
    const auto m = std::uniform_int_distribution<std::size_t>(1, max_m)(rng);
    std::exponential_distribution<double> ex(1.0);
    double total = 0;
    for (std::size_t i = 0; i < m; ++i) {
        inst.c.push_back(ex(rng) + 1e-3);
        total += inst.c.back();
    }
    for (auto& v : inst.c) v /= total;
    std::bernoulli_distribution coin(0.5);
    for (std::size_t i = 0; i < m; ++i) inst.y.push_back(coin(rng) ? 1 : 0);
    const double lambdas[] = {0.1, 1.0, 10.0};
    inst.lambda = lambdas[std::uniform_int_distribution<int>(0, 2)(rng)];
    return inst;
}

}  // namespace testing
