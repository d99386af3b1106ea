#include "prognet/data/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

namespace prognet::data {

void SyntheticSpec::validate() const {
    if (num_classes < 2) throw DataError("synthetic: need at least two classes");
    if (image_shape.size() != 3 || nn::shape_numel(image_shape) < 2)
        throw DataError("synthetic: image shape must be C,H,W with at least two pixels");
    if (separations.empty()) throw DataError("synthetic: no difficulty tiers");
    if (2 * separations.size() > nn::shape_numel(image_shape))
        throw DataError("synthetic: image too small for one latent plane per tier");
    for (std::size_t i = 0; i < separations.size(); ++i) {
        if (!(separations[i] > 0.0)) throw DataError("synthetic: tier separations must be positive");
        if (i > 0 && !(separations[i] < separations[i - 1]))
            throw DataError("synthetic: tier separations must decrease from easy to hard");
    }
    if (!(noise > 0.0) || pixel_noise < 0.0) throw DataError("synthetic: noise scales must be positive");
    if (samples_per_tier == 0) throw DataError("synthetic: samples_per_tier must be positive");
}

SyntheticSpec SyntheticSpec::from_kv(const KeyValues& kv) {
    SyntheticSpec s;
    s.num_classes = static_cast<std::size_t>(kv.get_int("num_classes", static_cast<long>(s.num_classes)));
    if (kv.has("image_shape")) {
        s.image_shape.clear();
        for (long e : kv.get_ints("image_shape")) {
            if (e <= 0) throw ConfigError("image_shape extents must be positive");
            s.image_shape.push_back(static_cast<std::size_t>(e));
        }
    }
    if (kv.has("separations")) s.separations = kv.get_doubles("separations");
    s.noise = kv.get_double("noise", s.noise);
    const long mirrored = kv.get_int("mirrored_tiers", static_cast<long>(s.mirrored_tiers));
    if (mirrored < 0) throw ConfigError("mirrored_tiers must be non-negative");
    s.mirrored_tiers = static_cast<std::size_t>(mirrored);
    s.pixel_noise = kv.get_double("pixel_noise", s.pixel_noise);
    const long per_tier = kv.get_int("samples_per_tier", static_cast<long>(s.samples_per_tier));
    if (per_tier <= 0) throw ConfigError("samples_per_tier must be positive");
    s.samples_per_tier = static_cast<std::size_t>(per_tier);
    s.seed = static_cast<std::uint64_t>(kv.get_int("seed", static_cast<long>(s.seed)));
    s.validate();
    return s;
}

KeyValues SyntheticSpec::to_kv() const {
    auto join = [](const auto& xs) {
        std::ostringstream os;
        os.precision(17);
        for (std::size_t i = 0; i < xs.size(); ++i) os << (i ? "," : "") << xs[i];
        return os.str();
    };
    KeyValues kv;
    kv.set("num_classes", std::to_string(num_classes));
    kv.set("image_shape", join(image_shape));
    kv.set("separations", join(separations));
    auto real = [](double v) {
        std::ostringstream os;
        os.precision(17);
        os << v;
        return os.str();
    };
    kv.set("noise", real(noise));
    kv.set("mirrored_tiers", std::to_string(mirrored_tiers));
    kv.set("pixel_noise", real(pixel_noise));
    kv.set("samples_per_tier", std::to_string(samples_per_tier));
    kv.set("seed", std::to_string(seed));
    return kv;
}

Dataset make_synthetic(const SyntheticSpec& spec, Split split) {
    spec.validate();
    const std::size_t dim = nn::shape_numel(spec.image_shape);
    const std::size_t tiers = spec.separations.size();

    // Geometry stream, shared by both splits: an orthonormal pair per tier.
    std::mt19937_64 geo(spec.seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::vector<std::vector<double>> basis;
    for (std::size_t b = 0; b < 2 * tiers; ++b) {
        std::vector<double> v(dim);
        for (auto& x : v) x = gauss(geo);
        for (const auto& prev : basis) {
            double dot = 0;
            for (std::size_t i = 0; i < dim; ++i) dot += prev[i] * v[i];
            for (std::size_t i = 0; i < dim; ++i) v[i] -= dot * prev[i];
        }
        double n = 0;
        for (double x : v) n += x * x;
        n = std::sqrt(n);
        for (double& x : v) x /= n;
        basis.push_back(std::move(v));
    }

    std::mt19937_64 rng(spec.seed * 0x9E3779B97F4A7C15ULL + (split == Split::train ? 1 : 2));
    const std::size_t total = tiers * spec.samples_per_tier;
    const double classes = static_cast<double>(spec.num_classes);
    const std::size_t mirrored = std::min(spec.mirrored_tiers, tiers - 1);

    Dataset ds;
    ds.image_shape = spec.image_shape;
    ds.num_classes = spec.num_classes;
    ds.split = split;
    ds.reals.resize(total * dim);
    ds.labels.resize(total);
    ds.tiers.resize(total);

    std::vector<std::size_t> order(total);
    for (std::size_t i = 0; i < total; ++i) order[i] = i;
    std::shuffle(order.begin(), order.end(), rng);

    std::bernoulli_distribution coin(0.5);
    std::size_t k = 0;
    for (std::size_t tier = 0; tier < tiers; ++tier) {
        const double sep = spec.separations[tier];
        const bool mirror = tier >= tiers - mirrored;
        const auto& u = basis[2 * tier];
        const auto& v = basis[2 * tier + 1];
        for (std::size_t s = 0; s < spec.samples_per_tier; ++s, ++k) {
            const std::size_t slot = order[k];
            const int label = static_cast<int>(s % spec.num_classes);
            double angle = 2.0 * std::numbers::pi * label / classes;
            if (mirror) angle = std::numbers::pi * label / classes + (coin(rng) ? std::numbers::pi : 0.0);
            const double z1 = sep * std::cos(angle) + spec.noise * gauss(rng);
            const double z2 = sep * std::sin(angle) + spec.noise * gauss(rng);
            float* px = ds.reals.data() + slot * dim;
            for (std::size_t i = 0; i < dim; ++i)
                px[i] = static_cast<float>(z1 * u[i] + z2 * v[i] + spec.pixel_noise * gauss(rng));
            ds.labels[slot] = label;
            ds.tiers[slot] = static_cast<int>(tier);
        }
    }
    ds.validate();
    return ds;
}

}  // namespace prognet::data
