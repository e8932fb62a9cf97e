/*
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */
#pragma once

#include <string>
#include <utility>
#include <vector>

#include "tensorrad/common.hpp"

namespace tensorrad {

enum class FlavourAxis { BIN_WIDTH, BIN_COUNT, PERTURB, FILTER, FUSION, VANILLA };

inline std::string to_string(FlavourAxis a) {
  switch (a) {
    case FlavourAxis::BIN_WIDTH: return "BIN_WIDTH";
    case FlavourAxis::BIN_COUNT: return "BIN_COUNT";
    case FlavourAxis::PERTURB: return "PERTURB";
    case FlavourAxis::FILTER: return "FILTER";
    case FlavourAxis::FUSION: return "FUSION";
    case FlavourAxis::VANILLA: return "VANILLA";
  }
  return "VANILLA";
}

inline FlavourAxis axis_from_string(const std::string& s) {
  for (auto a : {FlavourAxis::BIN_WIDTH, FlavourAxis::BIN_COUNT, FlavourAxis::PERTURB, FlavourAxis::FILTER,
                 FlavourAxis::FUSION, FlavourAxis::VANILLA})
    if (to_string(a) == s) return a;
  throw Error("unknown flavour axis '" + s + "'");
}

/// One parameter combination along a flavour axis.
///
/// Canonical text form is `AXIS{name=value;name=value}` with parameters in
/// insertion order and numbers in shortest round-trip decimal, for example
/// `BIN_WIDTH{width=0.1}` or `FILTER{kind=LOG;sigma_mm=1.5}`.
class FlavourKey {
public:
  FlavourKey() = default;
  explicit FlavourKey(FlavourAxis axis) : axis_(axis) {}

  FlavourKey& set(const std::string& name, const std::string& value) {
    validate_token(name);
    validate_token(value);
    for (auto& [n, v] : params_)
      if (n == name) {
        v = value;
        return *this;
      }
    params_.emplace_back(name, value);
    return *this;
  }
  FlavourKey& set(const std::string& name, const char* value) { return set(name, std::string(value)); }
  FlavourKey& set(const std::string& name, double value) { return set(name, format_double(value)); }
  FlavourKey& set(const std::string& name, int value) { return set(name, std::to_string(value)); }
  FlavourKey& set(const std::string& name, long value) { return set(name, std::to_string(value)); }
  FlavourKey& set(const std::string& name, unsigned long value) { return set(name, std::to_string(value)); }

  FlavourAxis axis() const { return axis_; }
  const std::vector<std::pair<std::string, std::string>>& params() const { return params_; }

  bool has(const std::string& name) const {
    for (const auto& [n, v] : params_)
      if (n == name) return true;
    return false;
  }
  const std::string& get(const std::string& name) const {
    for (const auto& [n, v] : params_)
      if (n == name) return v;
    throw Error("flavour " + str() + " has no parameter '" + name + "'");
  }
  double get_double(const std::string& name) const { return parse_double(get(name)); }
  long get_int(const std::string& name) const {
    const double v = get_double(name);
    if (v != std::floor(v)) throw Error("flavour parameter '" + name + "' is not an integer");
    return static_cast<long>(v);
  }
  std::string get_or(const std::string& name, const std::string& fallback) const {
    return has(name) ? get(name) : fallback;
  }

  std::string str() const {
    std::string s = to_string(axis_) + "{";
    for (std::size_t i = 0; i < params_.size(); ++i) {
      if (i) s += ";";
      s += params_[i].first + "=" + params_[i].second;
    }
    return s + "}";
  }

  static FlavourKey parse(const std::string& text) {
    const auto open = text.find('{');
    if (open == std::string::npos || text.empty() || text.back() != '}')
      throw Error("malformed flavour key '" + text + "'");
    FlavourKey key(axis_from_string(text.substr(0, open)));
    const std::string body = text.substr(open + 1, text.size() - open - 2);
    std::size_t pos = 0;
    while (pos < body.size()) {
      auto end = body.find(';', pos);
      if (end == std::string::npos) end = body.size();
      const std::string item = body.substr(pos, end - pos);
      const auto eq = item.find('=');
      if (eq == std::string::npos || eq == 0) throw Error("malformed flavour parameter '" + item + "'");
      key.set(item.substr(0, eq), item.substr(eq + 1));
      pos = end + 1;
    }
    return key;
  }

  friend bool operator==(const FlavourKey& a, const FlavourKey& b) {
    return a.axis_ == b.axis_ && a.params_ == b.params_;
  }
  friend bool operator<(const FlavourKey& a, const FlavourKey& b) { return a.str() < b.str(); }

private:
  static void validate_token(const std::string& t) {
    if (t.empty() || t.find_first_of("{};=,\"\n\r") != std::string::npos)
      throw Error("invalid flavour token '" + t + "'");
  }

  FlavourAxis axis_ = FlavourAxis::VANILLA;
  std::vector<std::pair<std::string, std::string>> params_;
};

inline FlavourKey vanilla_flavour() { return FlavourKey(FlavourAxis::VANILLA); }

}  // namespace tensorrad
