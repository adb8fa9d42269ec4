#include "msdet/config.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

namespace msdet::config {

namespace {
std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}
}  // namespace

Config Config::from_string(const std::string& text) {
    Config cfg;
    std::istringstream is(text);
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw std::runtime_error("config: line " + std::to_string(lineno) +
                                     " has no '='");
        std::string key = trim(line.substr(0, eq));
        std::string val = trim(line.substr(eq + 1));
        if (key.empty())
            throw std::runtime_error("config: line " + std::to_string(lineno) +
                                     " has an empty key");
        if (cfg.values_.count(key))
            throw std::runtime_error("config: duplicate key " + key);
        cfg.values_[key] = val;
        cfg.used_[key] = false;
    }
    return cfg;
}

Config Config::from_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("config: cannot open " + path);
    std::ostringstream buf;
    buf << is.rdbuf();
    return from_string(buf.str());
}

bool Config::has(const std::string& key) const {
    return values_.count(key) != 0;
}

std::string Config::get_str(const std::string& key,
                            const std::string& fallback) {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    used_[key] = true;
    return it->second;
}

int Config::get_int(const std::string& key, int fallback) {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    used_[key] = true;
    try {
        size_t pos;
        int v = std::stoi(it->second, &pos);
        if (pos != it->second.size()) throw std::invalid_argument("trailing");
        return v;
    } catch (const std::exception&) {
        throw std::runtime_error("config: key " + key + " is not an integer: " +
                                 it->second);
    }
}

float Config::get_float(const std::string& key, float fallback) {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    used_[key] = true;
    try {
        size_t pos;
        float v = std::stof(it->second, &pos);
        if (pos != it->second.size()) throw std::invalid_argument("trailing");
        return v;
    } catch (const std::exception&) {
        throw std::runtime_error("config: key " + key + " is not a number: " +
                                 it->second);
    }
}

std::vector<std::string> Config::unused_keys() const {
    std::vector<std::string> out;
    for (const auto& [key, used] : used_)
        if (!used) out.push_back(key);
    return out;
}

}  // namespace msdet::config
