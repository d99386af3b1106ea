#pragma once

#include <cstdint>
#include <vector>

#include "prognet/data/dataset.hpp"
#include "prognet/data/kv_config.hpp"

namespace prognet::data {

// Tiered Gaussian clusters. Each tier lives in its own 2-D latent plane,
// embedded into image space through a random orthonormal pair, plus isotropic
// pixel noise. Class centres sit on a regular polygon scaled by the tier's
// separation (easy -> hard). The hardest `mirrored_tiers` tiers (never the
// easiest) place every class at two antipodal centres, so no linear read-out
// separates them and a nonlinear stage is needed.
struct SyntheticSpec {
    std::size_t num_classes = 3;
    nn::Shape image_shape{1, 8, 8};
    std::vector<double> separations{6.0, 3.0, 2.5};
    double noise = 1.0;
    std::size_t mirrored_tiers = 1;
    double pixel_noise = 0.1;
    std::size_t samples_per_tier = 2000;
    std::uint64_t seed = 1;

    void validate() const;
    static SyntheticSpec from_kv(const KeyValues& kv);
    [[nodiscard]] KeyValues to_kv() const;
};

// Deterministic given (spec, split): both splits share class geometry and
// draw independent samples.
Dataset make_synthetic(const SyntheticSpec& spec, Split split = Split::train);

}  // namespace prognet::data
