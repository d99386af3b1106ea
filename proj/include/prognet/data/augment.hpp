#pragma once

#include <random>
#include <span>
#include <vector>

#include "prognet/numerics/tensor.hpp"

namespace prognet::data {

enum class CropMode {
    pad_crop,      // zero-pad 4 px per side, crop 32×32
    upsample_crop  // nearest-neighbour upsample to 40×40, crop 32×32
};

struct CropFlip {
    int dy = 4;  // crop origin in the padded/upsampled frame
    int dx = 4;
    bool flip = false;
};

inline constexpr int kAugmentPad = 4;

CropFlip sample_crop_flip(std::mt19937_64& rng);

// Applies a crop and optional horizontal flip to a C×32×32 real image.
std::vector<float> apply_crop_flip(std::span<const float> image, const nn::Shape& shape,
                                   const CropFlip& cf, CropMode mode = CropMode::pad_crop);

std::vector<float> hflip(std::span<const float> image, const nn::Shape& shape);

// Random crop + flip with probability 1/2. Input must be C×32×32 in [0,1].
std::vector<float> augment_train(std::span<const float> image, const nn::Shape& shape,
                                 std::mt19937_64& rng, CropMode mode = CropMode::pad_crop);

}  // namespace prognet::data
