#include "prognet/data/kv_config.hpp"

#include <fstream>
#include <sstream>

namespace prognet::data {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string item;
    std::istringstream is(s);
    while (std::getline(is, item, sep)) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

KeyValues KeyValues::parse(const std::string& text) {
    KeyValues kv;
    std::istringstream is(text);
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        line = trim(line);
        if (line.empty() || line[0] == '#') continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
        const auto key = trim(line.substr(0, eq));
        if (key.empty()) throw ConfigError("line " + std::to_string(lineno) + ": empty key");
        kv.entries_[key] = trim(line.substr(eq + 1));
    }
    return kv;
}

KeyValues KeyValues::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    try {
        return parse(ss.str());
    } catch (const ConfigError& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
}

std::optional<std::string> KeyValues::find(const std::string& key) const {
    auto it = entries_.find(key);
    if (it == entries_.end()) return std::nullopt;
    return it->second;
}

std::string KeyValues::get_string(const std::string& key) const {
    auto v = find(key);
    if (!v) throw ConfigError("missing config key '" + key + "'");
    return *v;
}

std::string KeyValues::get_string(const std::string& key, const std::string& fallback) const {
    return find(key).value_or(fallback);
}

namespace {
template <class T, class F>
T convert(const std::string& key, const std::string& value, F&& f) {
    try {
        std::size_t used = 0;
        T out = f(value, &used);
        if (used != value.size()) throw std::invalid_argument("trailing characters");
        return out;
    } catch (const std::exception&) {
        throw ConfigError("config key '" + key + "': cannot parse '" + value + "'");
    }
}
long to_long(const std::string& key, const std::string& v) {
    return convert<long>(key, v, [](const std::string& s, std::size_t* u) { return std::stol(s, u); });
}
double to_double(const std::string& key, const std::string& v) {
    return convert<double>(key, v, [](const std::string& s, std::size_t* u) { return std::stod(s, u); });
}
}  // namespace

long KeyValues::get_int(const std::string& key) const { return to_long(key, get_string(key)); }
long KeyValues::get_int(const std::string& key, long fallback) const {
    auto v = find(key);
    return v ? to_long(key, *v) : fallback;
}
double KeyValues::get_double(const std::string& key) const { return to_double(key, get_string(key)); }
double KeyValues::get_double(const std::string& key, double fallback) const {
    auto v = find(key);
    return v ? to_double(key, *v) : fallback;
}

std::vector<double> KeyValues::get_doubles(const std::string& key) const {
    std::vector<double> out;
    for (const auto& item : split(get_string(key), ',')) out.push_back(to_double(key, item));
    return out;
}

std::vector<long> KeyValues::get_ints(const std::string& key) const {
    std::vector<long> out;
    for (const auto& item : split(get_string(key), ',')) out.push_back(to_long(key, item));
    return out;
}

std::string KeyValues::str() const {
    std::ostringstream os;
    for (const auto& [k, v] : entries_) os << k << " = " << v << '\n';
    return os.str();
}

}  // namespace prognet::data
