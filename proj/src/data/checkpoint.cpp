#include "prognet/data/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>
#include <unordered_map>
#include <zlib.h>

namespace prognet::data {

namespace {

class Writer {
public:
    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void u64(std::uint64_t v) {
        for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void f32(float f) {
        std::uint32_t v;
        std::memcpy(&v, &f, 4);
        u32(v);
    }
    void f64(double d) {
        std::uint64_t v;
        std::memcpy(&v, &d, 8);
        u64(v);
    }
    void str(const std::string& s) {
        u32(static_cast<std::uint32_t>(s.size()));
        buf_.insert(buf_.end(), s.begin(), s.end());
    }
    void raw(const char* s, std::size_t n) { buf_.insert(buf_.end(), s, s + n); }
    std::vector<std::uint8_t>& bytes() { return buf_; }

private:
    std::vector<std::uint8_t> buf_;
};

class Reader {
public:
    explicit Reader(std::span<const std::uint8_t> b) : b_(b) {}
    void need(std::size_t n) const {
        if (pos_ + n > b_.size()) throw CheckpointError("checkpoint truncated");
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b_[pos_ + i]) << (8 * i);
        pos_ += 4;
        return v;
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b_[pos_ + i]) << (8 * i);
        pos_ += 8;
        return v;
    }
    float f32() {
        const std::uint32_t v = u32();
        float f;
        std::memcpy(&f, &v, 4);
        return f;
    }
    double f64() {
        const std::uint64_t v = u64();
        double d;
        std::memcpy(&d, &v, 8);
        return d;
    }
    std::string str() {
        const std::uint32_t n = u32();
        need(n);
        std::string s(reinterpret_cast<const char*>(b_.data() + pos_), n);
        pos_ += n;
        return s;
    }
    std::size_t pos() const { return pos_; }

private:
    std::span<const std::uint8_t> b_;
    std::size_t pos_ = 0;
};

constexpr char kMagic[4] = {'P', 'G', 'C', 'K'};

std::uint32_t crc_of(const std::uint8_t* data, std::size_t n) {
    return static_cast<std::uint32_t>(crc32(crc32(0L, Z_NULL, 0), data, static_cast<uInt>(n)));
}

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt) {
    Writer w;
    w.raw(kMagic, 4);
    w.u32(kCheckpointVersion);
    w.str(ckpt.meta.kind);
    w.str(ckpt.meta.config_digest);
    w.str(ckpt.meta.config_text);
    w.u32(ckpt.meta.epoch);
    w.f64(ckpt.meta.metric);
    w.u32(static_cast<std::uint32_t>(ckpt.entries.size()));
    for (const auto& e : ckpt.entries) {
        if (nn::shape_numel(e.shape) != e.values.size())
            throw CheckpointError("entry " + e.name + " has inconsistent shape");
        w.str(e.name);
        w.u32(static_cast<std::uint32_t>(e.shape.size()));
        for (auto d : e.shape) w.u32(static_cast<std::uint32_t>(d));
        for (float v : e.values) w.f32(v);
    }
    auto& bytes = w.bytes();
    const std::uint32_t crc = crc_of(bytes.data(), bytes.size());
    w.u32(crc);
    return std::move(w.bytes());
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < 12 || std::memcmp(bytes.data(), kMagic, 4) != 0)
        throw CheckpointError("not a checkpoint file (bad magic)");
    const std::size_t body = bytes.size() - 4;
    Reader tail(bytes.subspan(body));
    if (tail.u32() != crc_of(bytes.data(), body)) throw CheckpointError("checkpoint checksum mismatch");

    Reader r(bytes.first(body));
    r.need(4);
    (void)r.u32();  // magic
    const std::uint32_t version = r.u32();
    if (version != kCheckpointVersion)
        throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
    Checkpoint ckpt;
    ckpt.meta.kind = r.str();
    ckpt.meta.config_digest = r.str();
    ckpt.meta.config_text = r.str();
    ckpt.meta.epoch = r.u32();
    ckpt.meta.metric = r.f64();
    const std::uint32_t count = r.u32();
    std::set<std::string> seen;
    for (std::uint32_t i = 0; i < count; ++i) {
        TensorEntry e;
        e.name = r.str();
        if (!seen.insert(e.name).second) throw CheckpointError("duplicate parameter " + e.name);
        const std::uint32_t rank = r.u32();
        for (std::uint32_t d = 0; d < rank; ++d) e.shape.push_back(r.u32());
        const std::size_t n = nn::shape_numel(e.shape);
        r.need(4 * n);
        e.values.resize(n);
        for (auto& v : e.values) v = r.f32();
        ckpt.entries.push_back(std::move(e));
    }
    if (r.pos() != body) throw CheckpointError("trailing bytes in checkpoint");
    return ckpt;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
    const auto bytes = encode_checkpoint(ckpt);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointError("cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw CheckpointError("write failed for " + path.string());
}

namespace {
std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CheckpointError("cannot open checkpoint " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}
}  // namespace

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    const auto bytes = read_file(path);
    try {
        return decode_checkpoint(bytes);
    } catch (const CheckpointError& e) {
        throw CheckpointError(path.string() + ": " + e.what());
    }
}

std::uint32_t checkpoint_crc(const std::filesystem::path& path) {
    const auto bytes = read_file(path);
    return crc_of(bytes.data(), bytes.size());
}

Checkpoint capture(std::span<nn::Parameter<float>* const> params, CheckpointMeta meta) {
    Checkpoint ckpt{std::move(meta), {}};
    for (const auto* p : params) {
        auto v = p->tensor.data();
        ckpt.entries.push_back({p->name, p->tensor.shape(), std::vector<float>(v.begin(), v.end())});
    }
    return ckpt;
}

void restore(const Checkpoint& ckpt, std::span<nn::Parameter<float>* const> params) {
    std::unordered_map<std::string, const TensorEntry*> by_name;
    for (const auto& e : ckpt.entries) {
        if (!by_name.emplace(e.name, &e).second) throw CheckpointError("duplicate parameter " + e.name);
    }
    std::set<std::string> used;
    for (auto* p : params) {
        auto it = by_name.find(p->name);
        if (it == by_name.end()) throw CheckpointError("checkpoint lacks parameter " + p->name);
        if (it->second->shape != p->tensor.shape())
            throw CheckpointError("shape mismatch for " + p->name + ": checkpoint " +
                                  nn::shape_str(it->second->shape) + ", model " +
                                  nn::shape_str(p->tensor.shape()));
        used.insert(p->name);
    }
    for (const auto& e : ckpt.entries)
        if (!used.count(e.name)) throw CheckpointError("unknown parameter name " + e.name);
    for (auto* p : params) {
        const auto& values = by_name.at(p->name)->values;
        std::copy(values.begin(), values.end(), p->tensor.data().begin());
        std::fill(p->momentum_buffer.begin(), p->momentum_buffer.end(), 0.0f);
    }
}

std::string digest_hex(const std::string& text) {
    const auto crc = crc_of(reinterpret_cast<const std::uint8_t*>(text.data()), text.size());
    std::ostringstream os;
    os << std::hex << std::setw(8) << std::setfill('0') << crc;
    return os.str();
}

}  // namespace prognet::data
