#pragma once

#include <filesystem>
#include <span>
#include <utility>

#include "prognet/data/dataset.hpp"

namespace prognet::data::cifar10 {

inline constexpr std::size_t kImageBytes = 3 * 32 * 32;
inline constexpr std::size_t kRecordBytes = 1 + kImageBytes;
inline constexpr std::size_t kRecordsPerFile = 10000;
inline constexpr std::size_t kNumClasses = 10;

// Reads one binary batch file: records of 1 label byte + 3072 pixel bytes
// (R, G, B planes, each 32×32 row-major). `expected_records` of 0 accepts any count.
Dataset read_batch(const std::filesystem::path& file, std::size_t expected_records = kRecordsPerFile);

void write_batch(const std::filesystem::path& file, std::span<const std::uint8_t> pixels,
                 std::span<const int> labels);

// data_batch_1..5.bin -> train (50,000), test_batch.bin -> val (10,000).
std::pair<Dataset, Dataset> load(const std::filesystem::path& dir);

}  // namespace prognet::data::cifar10
