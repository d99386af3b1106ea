#include "prognet/cadp/targets.hpp"

#include <charconv>

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "prognet/data/kv_config.hpp"

namespace prognet::cadp {

void ThresholdGrid::validate() const {
    if (t.empty()) throw std::invalid_argument("threshold grid is empty");
    for (std::size_t k = 0; k < t.size(); ++k) {
        if (!(t[k] > 0.0 && t[k] < 1.0))
            throw std::invalid_argument("threshold " + std::to_string(t[k]) + " outside (0,1)");
        if (k > 0 && !(t[k] > t[k - 1])) throw std::invalid_argument("thresholds must be strictly increasing");
    }
}

std::vector<double> ThresholdGrid::representatives() const {
    validate();
    std::vector<double> rep;
    rep.push_back(t.front() / 2.0);
    for (std::size_t k = 1; k < t.size(); ++k) rep.push_back((t[k - 1] + t[k]) / 2.0);
    rep.push_back((t.back() + 1.0) / 2.0);
    return rep;
}

ThresholdGrid ThresholdGrid::parse(const std::string& csv) {
    ThresholdGrid g;
    g.t.clear();
    for (const auto& item : data::split(csv, ',')) {
        std::size_t used = 0;
        double v = 0;
        try {
            v = std::stod(item, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used != item.size() || item.empty()) throw std::invalid_argument("bad threshold '" + item + "'");
        g.t.push_back(v);
    }
    g.validate();
    return g;
}

std::string ThresholdGrid::str() const {
    // Shortest text that reads back to the same doubles.
    std::string out;
    char buf[32];
    for (std::size_t k = 0; k < t.size(); ++k) {
        if (k) out += ',';
        const auto res = std::to_chars(buf, buf + sizeof buf, t[k]);
        out.append(buf, res.ptr);
    }
    return out;
}

std::size_t emit_stage(std::span<const double> z, double t) {
    if (z.empty()) throw std::invalid_argument("emit_stage: empty confidence vector");
    for (std::size_t i = 0; i + 1 < z.size(); ++i)
        if (z[i] >= t) return i + 1;
    return z.size();
}

namespace {

void check_lengths(std::span<const int> correct, std::span<const double> c) {
    if (c.empty()) throw std::invalid_argument("cost vector is empty");
    if (correct.size() != c.size())
        throw std::invalid_argument("correctness vector has " + std::to_string(correct.size()) +
                                    " stages, cost vector " + std::to_string(c.size()));
    for (int y : correct)
        if (y != 0 && y != 1) throw std::invalid_argument("correctness entries must be 0 or 1");
}

// Cost of emitting at stage i (0-based); shared by the objective and the solver
// so both round identically.
std::vector<double> emit_costs(std::span<const int> correct, std::span<const double> c, double lambda) {
    std::vector<double> f(c.size());
    double prefix = 0.0;
    for (std::size_t i = 0; i < c.size(); ++i) {
        prefix += c[i];
        f[i] = prefix + lambda * static_cast<double>(1 - correct[i]);
    }
    return f;
}

}  // namespace

double conf_loss(std::span<const double> z, std::span<const int> correct, std::span<const double> c,
                 const ThresholdGrid& grid, double lambda) {
    check_lengths(correct, c);
    if (z.size() != c.size())
        throw std::invalid_argument("confidence vector length " + std::to_string(z.size()) +
                                    " does not match " + std::to_string(c.size()) + " stages");
    const auto f = emit_costs(correct, c, lambda);
    double total = 0.0;
    for (double t : grid.t) total += f[emit_stage(z, t) - 1];
    return total;
}

TargetSolution solve_targets(std::span<const int> correct, std::span<const double> c,
                             const ThresholdGrid& grid, double lambda) {
    check_lengths(correct, c);
    const auto rep = grid.representatives();
    const std::size_t m = c.size(), k_count = grid.size();
    const auto f = emit_costs(correct, c, lambda);

    // best[k][i]: minimal cost of thresholds 0..k with threshold k emitting at stage i,
    // over sequences whose emit stage never decreases as t grows.
    std::vector<std::vector<double>> best(k_count, std::vector<double>(m));
    for (std::size_t k = 0; k < k_count; ++k) {
        double running = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < m; ++i) {
            if (k > 0) running = std::min(running, best[k - 1][i]);
            best[k][i] = k == 0 ? f[i] : running + f[i];
        }
    }
    std::vector<std::size_t> emit(k_count);
    std::size_t limit = m;
    for (std::size_t k = k_count; k-- > 0;) {
        std::size_t arg = 0;
        for (std::size_t i = 1; i < limit; ++i)
            if (best[k][i] < best[k][arg]) arg = i;
        emit[k] = arg;
        limit = arg + 1;
    }

    // Stage i must clear exactly the thresholds it emits for (the largest such
    // index), earlier stages none of them.
    TargetSolution sol;
    sol.z.assign(m, rep.front());
    for (std::size_t k = 0; k < k_count; ++k) sol.z[emit[k]] = rep[k + 1];
    sol.loss = conf_loss(sol.z, correct, c, grid, lambda);
    return sol;
}

namespace {

// Solves A x = b (n×n, row-major) with partial pivoting; false when singular.
bool solve_linear(std::vector<double> a, std::vector<double> b, std::size_t n, std::vector<double>& x) {
    for (std::size_t col = 0; col < n; ++col) {
        std::size_t piv = col;
        for (std::size_t r = col + 1; r < n; ++r)
            if (std::abs(a[r * n + col]) > std::abs(a[piv * n + col])) piv = r;
        if (std::abs(a[piv * n + col]) < 1e-12) return false;
        if (piv != col) {
            for (std::size_t j = 0; j < n; ++j) std::swap(a[col * n + j], a[piv * n + j]);
            std::swap(b[col], b[piv]);
        }
        for (std::size_t r = col + 1; r < n; ++r) {
            const double factor = a[r * n + col] / a[col * n + col];
            for (std::size_t j = col; j < n; ++j) a[r * n + j] -= factor * a[col * n + j];
            b[r] -= factor * b[col];
        }
    }
    x.assign(n, 0.0);
    for (std::size_t r = n; r-- > 0;) {
        double s = b[r];
        for (std::size_t j = r + 1; j < n; ++j) s -= a[r * n + j] * x[j];
        x[r] = s / a[r * n + r];
    }
    return true;
}

}  // namespace

MinimizeResult minimize_linear_approx(const std::function<double(std::span<const double>)>& f,
                                      std::vector<double> x0, std::span<const double> lo,
                                      std::span<const double> hi, const LocalSolverOptions& opt) {
    const std::size_t n = x0.size();
    if (lo.size() != n || hi.size() != n) throw std::invalid_argument("box bounds do not match dimension");
    MinimizeResult res;
    auto clip = [&](std::vector<double>& x) {
        for (std::size_t j = 0; j < n; ++j) x[j] = std::clamp(x[j], lo[j], hi[j]);
    };
    auto eval = [&](const std::vector<double>& x) {
        ++res.evals;
        return f(x);
    };
    clip(x0);
    res.x = x0;
    res.f = eval(x0);
    if (n == 0) return res;

    double rho = opt.rho_begin;
    std::vector<std::vector<double>> pts;
    std::vector<double> vals;
    auto build_simplex = [&] {
        pts.assign(1, res.x);
        vals.assign(1, res.f);
        for (std::size_t j = 0; j < n; ++j) {
            auto p = res.x;
            p[j] = p[j] + rho <= hi[j] ? p[j] + rho : p[j] - rho;
            clip(p);
            pts.push_back(p);
            vals.push_back(eval(p));
            if (vals.back() < res.f) {
                res.f = vals.back();
                res.x = p;
            }
        }
    };
    build_simplex();

    while (rho >= opt.rho_end && res.evals < opt.max_evals) {
        std::size_t b = 0;
        for (std::size_t v = 1; v < pts.size(); ++v)
            if (vals[v] < vals[b]) b = v;

        // Linear model through the simplex: (x_v - x_b) · g = f_v - f_b.
        std::vector<double> a, rhs, g;
        for (std::size_t v = 0; v < pts.size(); ++v) {
            if (v == b) continue;
            for (std::size_t j = 0; j < n; ++j) a.push_back(pts[v][j] - pts[b][j]);
            rhs.push_back(vals[v] - vals[b]);
        }
        if (!solve_linear(a, rhs, n, g)) {
            build_simplex();
            continue;
        }
        double norm = 0.0;
        for (double gj : g) norm += gj * gj;
        norm = std::sqrt(norm);
        bool improved = false;
        if (norm > 0.0) {
            auto trial = pts[b];
            for (std::size_t j = 0; j < n; ++j) trial[j] -= rho * g[j] / norm;
            clip(trial);
            const double ft = eval(trial);
            if (ft < vals[b]) {
                std::size_t worst = 0;
                for (std::size_t v = 1; v < pts.size(); ++v)
                    if (vals[v] > vals[worst]) worst = v;
                pts[worst] = trial;
                vals[worst] = ft;
                if (ft < res.f) {
                    res.f = ft;
                    res.x = trial;
                }
                improved = true;
            }
        }
        if (!improved) {
            rho *= 0.5;
            build_simplex();
        }
    }
    return res;
}

TargetSolution solve_targets_local(std::span<const int> correct, std::span<const double> c,
                                   const ThresholdGrid& grid, double lambda,
                                   const LocalSolverOptions& opt) {
    check_lengths(correct, c);
    const std::size_t m = c.size();
    const std::size_t dims = m - 1;  // the last stage emits regardless of its confidence
    const double eps = 1e-6;
    std::vector<double> lo(dims, eps), hi(dims, 1.0 - eps);

    auto objective = [&](std::span<const double> x) {
        std::vector<double> z(x.begin(), x.end());
        z.push_back(0.5);
        return conf_loss(z, correct, c, grid, lambda);
    };

    TargetSolution best;
    best.loss = std::numeric_limits<double>::infinity();
    const double starts[] = {0.05, 0.5, 0.95};
    std::size_t combos = 1;
    for (std::size_t d = 0; d < dims; ++d) combos *= 3;
    for (std::size_t s = 0; s < combos; ++s) {
        std::vector<double> x0(dims);
        for (std::size_t d = 0, r = s; d < dims; ++d, r /= 3) x0[d] = starts[r % 3];
        const auto r = minimize_linear_approx(objective, x0, lo, hi, opt);
        if (r.f < best.loss) {
            best.loss = r.f;
            best.z = r.x;
        }
    }
    best.z.push_back(0.5);
    best.loss = conf_loss(best.z, correct, c, grid, lambda);
    return best;
}

}  // namespace prognet::cadp
