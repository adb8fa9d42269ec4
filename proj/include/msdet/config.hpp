#pragma once

#include <map>
#include <string>
#include <vector>

namespace msdet::config {

// Flat key=value files. '#' starts a comment (whole line or trailing);
// blank lines are fine; keys and values are trimmed. Duplicate keys and
// lines without '=' are errors.
class Config {
  public:
    Config() = default;
    static Config from_file(const std::string& path);
    static Config from_string(const std::string& text);

    bool has(const std::string& key) const;
    std::string get_str(const std::string& key, const std::string& fallback);
    int get_int(const std::string& key, int fallback);
    float get_float(const std::string& key, float fallback);

    // Keys never read by any getter; lets callers reject typos.
    std::vector<std::string> unused_keys() const;

    const std::map<std::string, std::string>& entries() const {
        return values_;
    }

  private:
    std::map<std::string, std::string> values_;
    std::map<std::string, bool> used_;
};

}  // namespace msdet::config
