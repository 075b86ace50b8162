#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace widemeta {

// UTF-8 key=value lines with dotted sections; '#' starts a comment; arrays
// are comma lists.
class KeyValueConfig {
  public:
    static KeyValueConfig from_file(const std::string& path);
    static KeyValueConfig from_string(const std::string& text);

    bool has(const std::string& key) const { return values_.count(key) > 0; }

    std::string get(const std::string& key) const;
    std::string get(const std::string& key, const std::string& fallback) const;
    int get_int(const std::string& key, int fallback) const;
    float get_float(const std::string& key, float fallback) const;
    bool get_bool(const std::string& key, bool fallback) const;
    std::vector<int> get_int_list(const std::string& key) const;
    std::vector<std::uint64_t> get_u64_list(const std::string& key) const;
    std::vector<std::string> get_str_list(const std::string& key) const;

    void set(const std::string& key, const std::string& value) { values_[key] = value; }

    const std::map<std::string, std::string>& values() const { return values_; }

  private:
    std::map<std::string, std::string> values_;
};

}  // namespace widemeta
