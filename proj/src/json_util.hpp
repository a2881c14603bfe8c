#pragma once

#include "rsplat/common.hpp"

#include <json.hpp>

#include <set>

namespace rsplat::detail {

using json = nlohmann::json;

/// Reads keys from a JSON object and rejects any key that was never asked for.
class StrictObject {
 public:
  StrictObject(const json& j, std::string context) : j_(j), ctx_(std::move(context)) {
    if (!j_.is_object()) throw ConfigError(ctx_ + ": expected an object");
  }

  bool has(const std::string& key) const { return j_.contains(key); }

  template <class T>
  T get(const std::string& key, T fallback) {
    used_.insert(key);
    if (!j_.contains(key)) return fallback;
    return convert<T>(key);
  }

  template <class T>
  T require(const std::string& key) {
    used_.insert(key);
    if (!j_.contains(key)) throw ConfigError(ctx_ + ": missing key '" + key + "'");
    return convert<T>(key);
  }

  StrictObject child(const std::string& key) {
    used_.insert(key);
    static const json empty = json::object();
    return StrictObject(j_.contains(key) ? j_.at(key) : empty, ctx_ + "." + key);
  }

  void finish() const {
    for (const auto& [k, v] : j_.items())
      if (!used_.count(k)) throw ConfigError(ctx_ + ": unknown key '" + k + "'");
  }

 private:
  template <class T>
  T convert(const std::string& key) {
    try {
      return j_.at(key).get<T>();
    } catch (const json::exception& e) {
      throw ConfigError(ctx_ + "." + key + ": " + e.what());
    }
  }

  const json& j_;
  std::string ctx_;
  std::set<std::string> used_;
};

inline json vec_json(const Vec3& v) { return json::array({v[0], v[1], v[2]}); }

inline Vec3 json_vec3(const json& j, const std::string& ctx) {
  if (!j.is_array() || j.size() != 3) throw ConfigError(ctx + ": expected a 3-vector");
  return Vec3(j[0].get<double>(), j[1].get<double>(), j[2].get<double>());
}

}  // namespace rsplat::detail
