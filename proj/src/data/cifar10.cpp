#include "prognet/data/cifar10.hpp"

#include <fstream>

namespace prognet::data::cifar10 {

Dataset read_batch(const std::filesystem::path& file, std::size_t expected_records) {
    std::error_code ec;
    if (!std::filesystem::exists(file, ec)) throw DataError("missing CIFAR-10 file " + file.string());
    const auto bytes = std::filesystem::file_size(file, ec);
    if (ec) throw DataError("cannot stat " + file.string());
    if (expected_records != 0 && bytes != expected_records * kRecordBytes) {
        throw DataError(file.string() + ": expected " + std::to_string(expected_records * kRecordBytes) +
                        " bytes, found " + std::to_string(bytes));
    }
    if (bytes == 0 || bytes % kRecordBytes != 0) {
        throw DataError(file.string() + ": size " + std::to_string(bytes) +
                        " is not a multiple of the " + std::to_string(kRecordBytes) + "-byte record");
    }
    const std::size_t records = bytes / kRecordBytes;
    std::ifstream in(file, std::ios::binary);
    if (!in) throw DataError("cannot open " + file.string());

    Dataset ds;
    ds.image_shape = {3, 32, 32};
    ds.num_classes = kNumClasses;
    ds.bytes.resize(records * kImageBytes);
    ds.labels.resize(records);
    std::vector<char> record(kRecordBytes);
    for (std::size_t r = 0; r < records; ++r) {
        if (!in.read(record.data(), static_cast<std::streamsize>(kRecordBytes)))
            throw DataError(file.string() + ": short read at record " + std::to_string(r));
        const auto label = static_cast<std::uint8_t>(record[0]);
        if (label >= kNumClasses)
            throw DataError(file.string() + ": record " + std::to_string(r) + " has label byte " +
                            std::to_string(label));
        ds.labels[r] = label;
        std::copy(record.begin() + 1, record.end(),
                  reinterpret_cast<char*>(ds.bytes.data() + r * kImageBytes));
    }
    return ds;
}

void write_batch(const std::filesystem::path& file, std::span<const std::uint8_t> pixels,
                 std::span<const int> labels) {
    if (pixels.size() != labels.size() * kImageBytes)
        throw DataError("write_batch: pixel count does not match label count");
    std::ofstream out(file, std::ios::binary);
    if (!out) throw DataError("cannot write " + file.string());
    for (std::size_t r = 0; r < labels.size(); ++r) {
        if (labels[r] < 0 || labels[r] >= static_cast<int>(kNumClasses))
            throw DataError("write_batch: label out of range");
        const char label = static_cast<char>(labels[r]);
        out.write(&label, 1);
        out.write(reinterpret_cast<const char*>(pixels.data() + r * kImageBytes), kImageBytes);
    }
    if (!out) throw DataError("write failed for " + file.string());
}

namespace {
void append(Dataset& into, Dataset&& part) {
    into.bytes.insert(into.bytes.end(), part.bytes.begin(), part.bytes.end());
    into.labels.insert(into.labels.end(), part.labels.begin(), part.labels.end());
}
}  // namespace

std::pair<Dataset, Dataset> load(const std::filesystem::path& dir) {
    if (!std::filesystem::is_directory(dir)) throw DataError("CIFAR-10 directory not found: " + dir.string());
    Dataset train;
    train.image_shape = {3, 32, 32};
    train.num_classes = kNumClasses;
    train.split = Split::train;
    for (int i = 1; i <= 5; ++i)
        append(train, read_batch(dir / ("data_batch_" + std::to_string(i) + ".bin")));
    Dataset val = read_batch(dir / "test_batch.bin");
    val.split = Split::val;
    train.validate();
    val.validate();
    return {std::move(train), std::move(val)};
}

}  // namespace prognet::data::cifar10
