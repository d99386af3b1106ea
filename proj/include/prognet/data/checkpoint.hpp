#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "prognet/numerics/optim.hpp"

namespace prognet::data {

// Binary checkpoint layout (all integers little-endian):
//   "PGCK" | u32 version
//   str kind | str config_digest | str config_text | u32 epoch | f64 metric
//   u32 entry_count
//   entry: str name | u32 rank | u32 dims[rank] | f32 values[prod(dims)]
//   u32 crc32 of every preceding byte
// where str = u32 length + bytes.
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct CheckpointMeta {
    std::string kind;           // "prognet" or "controller"
    std::string config_digest;  // hex digest of config_text
    std::string config_text;    // resolved key-value config the params belong to
    std::uint32_t epoch = 0;
    double metric = 0.0;
};

struct TensorEntry {
    std::string name;
    nn::Shape shape;
    std::vector<float> values;
};

struct Checkpoint {
    CheckpointMeta meta;
    std::vector<TensorEntry> entries;
};

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes);

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

Checkpoint capture(std::span<nn::Parameter<float>* const> params, CheckpointMeta meta);
// Every parameter must be present exactly once with a matching shape, and no
// unknown names may appear.
void restore(const Checkpoint& ckpt, std::span<nn::Parameter<float>* const> params);

std::string digest_hex(const std::string& text);
// crc32 over the encoded file, used to key derived caches.
std::uint32_t checkpoint_crc(const std::filesystem::path& path);

}  // namespace prognet::data
