#include "prognet/model/config.hpp"

#include <sstream>
#include <stdexcept>

namespace prognet::model {

using data::ConfigError;

std::string to_string(Topology t) { return t == Topology::parallel ? "parallel" : "serial"; }

std::string to_string(BlockKind b) {
    switch (b) {
        case BlockKind::residual: return "residual";
        case BlockKind::dense: return "dense";
        case BlockKind::mlp: return "mlp";
    }
    return "?";
}

Topology parse_topology(const std::string& s) {
    if (s == "parallel") return Topology::parallel;
    if (s == "serial") return Topology::serial;
    throw ConfigError("unknown topology '" + s + "'");
}

BlockKind parse_block_kind(const std::string& s) {
    if (s == "residual") return BlockKind::residual;
    if (s == "dense") return BlockKind::dense;
    if (s == "mlp") return BlockKind::mlp;
    throw ConfigError("unsupported block kind '" + s + "'");
}

std::vector<double> NetworkConfig::weights() const {
    return stage_weights.empty() ? std::vector<double>(stages.size(), 1.0) : stage_weights;
}

void NetworkConfig::validate() const {
    if (stages.size() < 2) throw ConfigError("a progressive network needs at least two stages");
    if (num_classes < 2) throw ConfigError("num_classes must be at least 2");
    if (base_width < 1) throw ConfigError("base_width must be positive");
    if (input_shape.size() != 3) throw ConfigError("input_shape must be C,H,W");
    if (!stage_weights.empty() && stage_weights.size() != stages.size())
        throw ConfigError("stage_weights has " + std::to_string(stage_weights.size()) +
                          " entries for " + std::to_string(stages.size()) + " stages");
    const auto levels = stages.front().depth_per_resolution.size();
    for (std::size_t i = 0; i < stages.size(); ++i) {
        const auto& s = stages[i];
        const std::string where = "stage " + std::to_string(i + 1) + ": ";
        if (s.width_multiplier < 1) throw ConfigError(where + "width_multiplier must be >= 1");
        if (s.depth_per_resolution.empty()) throw ConfigError(where + "depth list is empty");
        if (s.depth_per_resolution.size() != levels)
            throw ConfigError(where + "all stages must list the same number of resolutions");
        for (int d : s.depth_per_resolution)
            if (d < 0) throw ConfigError(where + "negative block count");
        if (s.block_kind != stages.front().block_kind)
            throw ConfigError(where + "mixed block kinds are not supported");
        if (s.block_kind == BlockKind::dense && s.growth_k < 1)
            throw ConfigError(where + "growth_k must be positive");
    }
    if (stages.front().block_kind != BlockKind::mlp) {
        // Stem halves the input, every later resolution halves again.
        std::size_t extent = input_shape[1];
        if (extent < 2) throw ConfigError("input too small for the stride-2 stem");
        extent = (extent + 1) / 2;
        for (std::size_t r = 1; r < levels; ++r) extent = (extent - 1) / 2 + 1;
        if (extent < 1) throw ConfigError("too many resolutions for the input size");
    }
}

namespace {

StageSpec stage(BlockKind kind, int mult, std::vector<int> depth, int growth = 12) {
    return StageSpec{kind, mult, std::move(depth), growth};
}

std::vector<int> parse_depth(const std::string& s, char sep) {
    std::vector<int> out;
    for (const auto& item : data::split(s, sep)) {
        try {
            out.push_back(std::stoi(item));
        } catch (const std::exception&) {
            throw ConfigError("cannot parse block count '" + item + "'");
        }
    }
    return out;
}

}  // namespace

NetworkConfig NetworkConfig::preset(const std::string& name) {
    NetworkConfig c;
    if (name == "p4-residual" || name == "p6-residual") {
        c.topology = Topology::parallel;
        const std::vector<int> mults =
            name == "p4-residual" ? std::vector<int>{1, 1, 2, 3} : std::vector<int>{1, 1, 1, 2, 3, 4};
        for (int m : mults) c.stages.push_back(stage(BlockKind::residual, m, {2, 3, 3}));
    } else if (name == "s9-dense") {
        c.topology = Topology::serial;
        for (int i = 0; i < 3; ++i) c.stages.push_back(stage(BlockKind::dense, 1, {2, 0, 0}));
        for (int i = 0; i < 3; ++i) c.stages.push_back(stage(BlockKind::dense, 1, {0, 2, 0}));
        for (int i = 0; i < 2; ++i) c.stages.push_back(stage(BlockKind::dense, 1, {0, 0, 3}));
        // Closing classifier after global pooling: a tap with no new layers.
        c.stages.push_back(stage(BlockKind::dense, 1, {0, 0, 0}));
    } else if (name == "p4-mlp" || name == "p2-mlp") {
        c.topology = Topology::parallel;
        const std::vector<int> mults = name == "p4-mlp" ? std::vector<int>{1, 1, 2, 3} : std::vector<int>{1, 2};
        // p4-mlp opens with a linear read-out (no hidden layer) so the first exit is
        // cheap and cannot resolve classes that need nonlinear features.
        const std::vector<int> depth = name == "p4-mlp" ? std::vector<int>{0, 1, 2, 2} : std::vector<int>{2, 2};
        for (std::size_t i = 0; i < mults.size(); ++i) c.stages.push_back(stage(BlockKind::mlp, mults[i], {depth[i]}));
        c.base_width = 8;
        c.num_classes = 3;
        c.input_shape = {1, 8, 8};
    } else if (name == "s4-mlp") {
        c.topology = Topology::serial;
        for (int i = 0; i < 4; ++i) c.stages.push_back(stage(BlockKind::mlp, 1, {1}));
        c.base_width = 16;
        c.num_classes = 3;
        c.input_shape = {1, 8, 8};
    } else {
        throw ConfigError("unknown network preset '" + name + "'");
    }
    c.validate();
    return c;
}

NetworkConfig NetworkConfig::from_kv(const data::KeyValues& kv) {
    NetworkConfig c;
    if (kv.has("preset")) c = preset(kv.get_string("preset"));
    if (kv.has("topology")) c.topology = parse_topology(kv.get_string("topology"));
    c.base_width = static_cast<int>(kv.get_int("base_width", c.base_width));
    c.num_classes = static_cast<int>(kv.get_int("num_classes", c.num_classes));
    if (kv.has("input_shape")) {
        c.input_shape.clear();
        for (long e : kv.get_ints("input_shape")) {
            if (e <= 0) throw ConfigError("input_shape extents must be positive");
            c.input_shape.push_back(static_cast<std::size_t>(e));
        }
    }

    std::vector<std::vector<int>> depths;
    if (kv.has("segments")) {
        for (const auto& seg : data::split(kv.get_string("segments"), ',')) depths.push_back(parse_depth(seg, '/'));
    }
    std::vector<long> mults;
    if (kv.has("multipliers")) mults = kv.get_ints("multipliers");
    std::size_t count = !depths.empty() ? depths.size() : (!mults.empty() ? mults.size() : c.stages.size());
    if (count == 0) throw ConfigError("network config defines no stages (set preset, multipliers or segments)");
    if (!depths.empty() && !mults.empty() && depths.size() != mults.size())
        throw ConfigError("multipliers and segments list different stage counts");
    if (kv.has("depth")) {
        const auto shared = parse_depth(kv.get_string("depth"), ',');
        depths.assign(count, shared);
    }

    std::vector<StageSpec> stages(count);
    for (std::size_t i = 0; i < count; ++i) {
        if (i < c.stages.size()) stages[i] = c.stages[i];
        else if (!c.stages.empty()) stages[i] = c.stages.back();
        if (kv.has("block")) stages[i].block_kind = parse_block_kind(kv.get_string("block"));
        if (kv.has("growth")) stages[i].growth_k = static_cast<int>(kv.get_int("growth"));
        if (!mults.empty()) stages[i].width_multiplier = static_cast<int>(mults[i]);
        if (!depths.empty()) stages[i].depth_per_resolution = depths[i];
    }
    c.stages = std::move(stages);
    if (kv.has("stage_weights")) c.stage_weights = kv.get_doubles("stage_weights");
    c.validate();
    return c;
}

data::KeyValues NetworkConfig::to_kv() const {
    data::KeyValues kv;
    auto join_ints = [](const auto& xs, const char* sep) {
        std::ostringstream os;
        for (std::size_t i = 0; i < xs.size(); ++i) os << (i ? sep : "") << xs[i];
        return os.str();
    };
    kv.set("topology", to_string(topology));
    kv.set("block", to_string(stages.front().block_kind));
    kv.set("growth", std::to_string(stages.front().growth_k));
    kv.set("base_width", std::to_string(base_width));
    kv.set("num_classes", std::to_string(num_classes));
    kv.set("input_shape", join_ints(input_shape, ","));
    std::vector<int> mults;
    std::vector<std::string> segs;
    for (const auto& s : stages) {
        mults.push_back(s.width_multiplier);
        segs.push_back(join_ints(s.depth_per_resolution, "/"));
    }
    kv.set("multipliers", join_ints(mults, ","));
    kv.set("segments", join_ints(segs, ","));
    if (!stage_weights.empty()) {
        std::ostringstream os;
        os.precision(17);
        for (std::size_t i = 0; i < stage_weights.size(); ++i) os << (i ? "," : "") << stage_weights[i];
        kv.set("stage_weights", os.str());
    }
    return kv;
}

}  // namespace prognet::model
