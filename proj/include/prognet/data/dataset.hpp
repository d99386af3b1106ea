#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "prognet/numerics/tensor.hpp"

namespace prognet::data {

struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class Split { train, val };

// Images are stored either as 8-bit pixels (scaled to [0,1] on access) or as
// real values; exactly one of `bytes` / `reals` is populated.
struct Dataset {
    nn::Shape image_shape;  // C,H,W
    std::size_t num_classes = 0;
    std::vector<std::uint8_t> bytes;
    std::vector<float> reals;
    std::vector<int> labels;
    std::vector<int> tiers;  // optional difficulty tier per image (synthetic data)
    Split split = Split::train;

    [[nodiscard]] std::size_t size() const { return labels.size(); }
    [[nodiscard]] std::size_t image_size() const { return nn::shape_numel(image_shape); }
    [[nodiscard]] bool is_8bit() const { return !bytes.empty(); }

    // Writes image k as reals into `out` (length image_size()).
    void image(std::size_t k, std::span<float> out) const;
    [[nodiscard]] std::vector<float> image(std::size_t k) const;

    [[nodiscard]] nn::Tensor<float> batch(std::span<const std::size_t> indices) const;
    [[nodiscard]] std::vector<int> batch_labels(std::span<const std::size_t> indices) const;

    // Throws DataError when an invariant is violated.
    void validate() const;

    [[nodiscard]] Dataset subset(std::span<const std::size_t> indices) const;
};

}  // namespace prognet::data
