#include "prognet/data/augment.hpp"

#include "prognet/data/dataset.hpp"

namespace prognet::data {

namespace {
void check_shape(std::span<const float> image, const nn::Shape& shape) {
    if (shape.size() != 3 || shape[1] != 32 || shape[2] != 32)
        throw DataError("augmentation expects C×32×32 images, got " + nn::shape_str(shape));
    if (image.size() != nn::shape_numel(shape)) throw DataError("augmentation: buffer/shape mismatch");
}
}  // namespace

CropFlip sample_crop_flip(std::mt19937_64& rng) {
    std::uniform_int_distribution<int> offset(0, 2 * kAugmentPad);
    std::bernoulli_distribution coin(0.5);
    CropFlip cf;
    cf.dy = offset(rng);
    cf.dx = offset(rng);
    cf.flip = coin(rng);
    return cf;
}

std::vector<float> hflip(std::span<const float> image, const nn::Shape& shape) {
    const std::size_t c = shape[0], h = shape[1], w = shape[2];
    std::vector<float> out(image.size());
    for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t y = 0; y < h; ++y)
            for (std::size_t x = 0; x < w; ++x)
                out[(ch * h + y) * w + x] = image[(ch * h + y) * w + (w - 1 - x)];
    return out;
}

std::vector<float> apply_crop_flip(std::span<const float> image, const nn::Shape& shape,
                                   const CropFlip& cf, CropMode mode) {
    check_shape(image, shape);
    if (cf.dy < 0 || cf.dx < 0 || cf.dy > 2 * kAugmentPad || cf.dx > 2 * kAugmentPad)
        throw DataError("crop offset out of range");
    const int c = static_cast<int>(shape[0]), h = 32, w = 32;
    const int big = h + 2 * kAugmentPad;
    std::vector<float> out(image.size());
    for (int ch = 0; ch < c; ++ch)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                const int fy = y + cf.dy, fx = x + cf.dx;  // position in the 40×40 frame
                float v = 0.0f;
                if (mode == CropMode::pad_crop) {
                    const int sy = fy - kAugmentPad, sx = fx - kAugmentPad;
                    if (sy >= 0 && sx >= 0 && sy < h && sx < w) v = image[(ch * h + sy) * w + sx];
                } else {
                    const int sy = fy * h / big, sx = fx * w / big;
                    v = image[(ch * h + sy) * w + sx];
                }
                out[(ch * h + y) * w + x] = v;
            }
    return cf.flip ? hflip(out, shape) : out;
}

std::vector<float> augment_train(std::span<const float> image, const nn::Shape& shape,
                                 std::mt19937_64& rng, CropMode mode) {
    return apply_crop_flip(image, shape, sample_crop_flip(rng), mode);
}

}  // namespace prognet::data
