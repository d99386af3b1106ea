#include "prognet/data/dataset.hpp"

#include <algorithm>

namespace prognet::data {

void Dataset::image(std::size_t k, std::span<float> out) const {
    const std::size_t n = image_size();
    if (k >= size()) throw DataError("image index " + std::to_string(k) + " out of range");
    if (out.size() != n) throw DataError("image buffer has wrong length");
    if (is_8bit()) {
        const std::uint8_t* src = bytes.data() + k * n;
        for (std::size_t i = 0; i < n; ++i) out[i] = static_cast<float>(src[i]) / 255.0f;
    } else {
        std::copy_n(reals.data() + k * n, n, out.data());
    }
}

std::vector<float> Dataset::image(std::size_t k) const {
    std::vector<float> out(image_size());
    image(k, out);
    return out;
}

nn::Tensor<float> Dataset::batch(std::span<const std::size_t> indices) const {
    const std::size_t n = image_size();
    std::vector<float> buf(indices.size() * n);
    for (std::size_t i = 0; i < indices.size(); ++i)
        image(indices[i], std::span<float>(buf.data() + i * n, n));
    nn::Shape shape{indices.size()};
    shape.insert(shape.end(), image_shape.begin(), image_shape.end());
    return nn::Tensor<float>(std::move(shape), std::move(buf));
}

std::vector<int> Dataset::batch_labels(std::span<const std::size_t> indices) const {
    std::vector<int> out;
    out.reserve(indices.size());
    for (auto i : indices) out.push_back(labels.at(i));
    return out;
}

void Dataset::validate() const {
    if (size() == 0) throw DataError("dataset is empty");
    if (image_shape.size() != 3) throw DataError("image shape must be C,H,W");
    if (num_classes < 2) throw DataError("dataset needs at least two classes");
    const std::size_t expected = size() * image_size();
    if (is_8bit() ? bytes.size() != expected : reals.size() != expected)
        throw DataError("pixel storage does not match image count and shape");
    if (is_8bit() && !reals.empty()) throw DataError("dataset has both 8-bit and real pixels");
    for (int y : labels)
        if (y < 0 || static_cast<std::size_t>(y) >= num_classes)
            throw DataError("label " + std::to_string(y) + " outside [0," + std::to_string(num_classes) + ")");
    if (!tiers.empty() && tiers.size() != size()) throw DataError("tier tags do not match image count");
}

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
    Dataset out;
    out.image_shape = image_shape;
    out.num_classes = num_classes;
    out.split = split;
    const std::size_t n = image_size();
    for (auto k : indices) {
        if (is_8bit())
            out.bytes.insert(out.bytes.end(), bytes.begin() + k * n, bytes.begin() + (k + 1) * n);
        else
            out.reals.insert(out.reals.end(), reals.begin() + k * n, reals.begin() + (k + 1) * n);
        out.labels.push_back(labels.at(k));
        if (!tiers.empty()) out.tiers.push_back(tiers.at(k));
    }
    return out;
}

}  // namespace prognet::data
