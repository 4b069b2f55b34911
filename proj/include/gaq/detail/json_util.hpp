#pragma once

#include <nlohmann/json.hpp>

#include <set>
#include <stdexcept>
#include <string>

namespace gaq::detail {

using nlohmann::json;

/// Rejects objects with keys outside the allowed set. Strictness here turns
/// typos in config files into errors instead of silently ignored settings.
inline void reject_unknown_keys(const json& obj, const std::set<std::string>& allowed,
                                const std::string& context) {
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        if (!allowed.count(it.key()))
            throw std::runtime_error(context + ": unknown key \"" + it.key() + "\"");
    }
}

inline const json& require_key(const json& obj, const std::string& key,
                               const std::string& context) {
    auto it = obj.find(key);
    if (it == obj.end())
        throw std::runtime_error(context + ": missing key \"" + key + "\"");
    return *it;
}

inline std::string get_string(const json& obj, const std::string& key,
                              const std::string& context) {
    const json& v = require_key(obj, key, context);
    if (!v.is_string())
        throw std::runtime_error(context + ": \"" + key + "\" must be a string");
    return v.get<std::string>();
}

inline double get_number(const json& obj, const std::string& key, const std::string& context) {
    const json& v = require_key(obj, key, context);
    if (!v.is_number())
        throw std::runtime_error(context + ": \"" + key + "\" must be a number");
    return v.get<double>();
}

inline long get_integer(const json& obj, const std::string& key, const std::string& context) {
    const json& v = require_key(obj, key, context);
    if (!v.is_number_integer())
        throw std::runtime_error(context + ": \"" + key + "\" must be an integer");
    return v.get<long>();
}

}  // namespace gaq::detail
