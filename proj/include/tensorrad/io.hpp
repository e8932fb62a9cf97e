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

// MetaImage (.mhd + .raw) volumes and CSV/JSON feature tables.

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "json.hpp"
#include "tensorrad/flavour.hpp"
#include "tensorrad/volume.hpp"

namespace tensorrad {

namespace fs = std::filesystem;

enum class ElementType { MET_SHORT, MET_FLOAT, MET_DOUBLE, MET_UCHAR };

inline std::string to_string(ElementType t) {
  switch (t) {
    case ElementType::MET_SHORT: return "MET_SHORT";
    case ElementType::MET_FLOAT: return "MET_FLOAT";
    case ElementType::MET_DOUBLE: return "MET_DOUBLE";
    case ElementType::MET_UCHAR: return "MET_UCHAR";
  }
  return "MET_FLOAT";
}

inline ElementType element_type_from_string(const std::string& s) {
  for (auto t : {ElementType::MET_SHORT, ElementType::MET_FLOAT, ElementType::MET_DOUBLE, ElementType::MET_UCHAR})
    if (to_string(t) == s) return t;
  throw Error("unsupported MetaImage ElementType '" + s + "'");
}

inline std::size_t element_size(ElementType t) {
  switch (t) {
    case ElementType::MET_SHORT: return 2;
    case ElementType::MET_FLOAT: return 4;
    case ElementType::MET_DOUBLE: return 8;
    case ElementType::MET_UCHAR: return 1;
  }
  return 4;
}

struct MetaImageHeader {
  Dims dims;
  Spacing spacing;
  ElementType element_type = ElementType::MET_FLOAT;
  bool msb = false;
  std::string data_file;  // relative to the header, or "LOCAL"
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

template <typename T>
std::vector<T> parse_list(const std::string& key, const std::string& text, std::size_t n) {
  std::istringstream in(text);
  std::vector<T> out;
  T v{};
  while (in >> v) out.push_back(v);
  if (out.size() != n || !in.eof()) throw Error("MetaImage key " + key + " must hold " + std::to_string(n) + " values");
  return out;
}

inline void swap_bytes(char* p, std::size_t width) { std::reverse(p, p + width); }

}  // namespace detail

/// Parses header keys; `payload_offset` receives the byte offset of LOCAL data.
inline MetaImageHeader read_mhd_header(const fs::path& path, std::streamoff* payload_offset = nullptr) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open MetaImage header " + path.string());
  std::map<std::string, std::string> keys;
  std::string line;
  while (std::getline(in, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    const std::string key = detail::trim(line.substr(0, eq));
    keys[key] = detail::trim(line.substr(eq + 1));
    if (key == "ElementDataFile") break;  // payload (LOCAL) or end of header
  }
  if (payload_offset) *payload_offset = in.tellg();
  for (const char* req : {"NDims", "DimSize", "ElementType", "ElementDataFile"})
    if (!keys.count(req)) throw Error("MetaImage header " + path.string() + " is missing key " + req);
  if (keys["NDims"] != "3") throw Error("MetaImage NDims must be 3");
  MetaImageHeader h;
  const auto dims = detail::parse_list<long>("DimSize", keys["DimSize"], 3);
  for (long d : dims)
    if (d <= 0) throw Error("MetaImage DimSize must be positive");
  h.dims = {static_cast<std::size_t>(dims[0]), static_cast<std::size_t>(dims[1]), static_cast<std::size_t>(dims[2])};
  if (keys.count("ElementSpacing")) {
    const auto sp = detail::parse_list<double>("ElementSpacing", keys["ElementSpacing"], 3);
    h.spacing = {sp[0], sp[1], sp[2]};
  }
  h.element_type = element_type_from_string(keys["ElementType"]);
  const std::string msb = keys.count("BinaryDataByteOrderMSB") ? keys["BinaryDataByteOrderMSB"]
                          : keys.count("ElementByteOrderMSB")  ? keys["ElementByteOrderMSB"]
                                                               : "False";
  h.msb = msb == "True" || msb == "true" || msb == "1";
  h.data_file = keys["ElementDataFile"];
  return h;
}

/// Reads raw samples as doubles in file order.
inline std::vector<double> read_mhd_samples(const fs::path& path, MetaImageHeader* header_out = nullptr) {
  std::streamoff offset = 0;
  const MetaImageHeader h = read_mhd_header(path, &offset);
  if (header_out) *header_out = h;
  const std::size_t width = element_size(h.element_type);
  const std::size_t n = h.dims.size();
  std::vector<char> bytes;
  {
    const bool local = h.data_file == "LOCAL";
    const fs::path raw = local ? path : path.parent_path() / h.data_file;
    std::ifstream in(raw, std::ios::binary);
    if (!in) throw Error("cannot open MetaImage payload " + raw.string());
    if (local) in.seekg(offset);
    bytes.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
  }
  if (bytes.size() != n * width)
    throw Error("MetaImage payload size mismatch: header declares " + std::to_string(n) + " voxels (" +
                std::to_string(n * width) + " bytes), payload has " + std::to_string(bytes.size()) + " bytes");
  const bool swap = h.msb != (std::endian::native == std::endian::big);
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    char* p = bytes.data() + i * width;
    if (swap) detail::swap_bytes(p, width);
    switch (h.element_type) {
      case ElementType::MET_SHORT: {
        std::int16_t v;
        std::memcpy(&v, p, 2);
        out[i] = v;
        break;
      }
      case ElementType::MET_FLOAT: {
        float v;
        std::memcpy(&v, p, 4);
        out[i] = v;
        break;
      }
      case ElementType::MET_DOUBLE: {
        double v;
        std::memcpy(&v, p, 8);
        out[i] = v;
        break;
      }
      case ElementType::MET_UCHAR: {
        std::uint8_t v;
        std::memcpy(&v, p, 1);
        out[i] = v;
        break;
      }
    }
  }
  return out;
}

inline Volume read_mhd(const fs::path& path, Unit unit = Unit::ARBITRARY) {
  MetaImageHeader h;
  auto samples = read_mhd_samples(path, &h);
  return Volume(h.dims, h.spacing, unit, std::move(samples));
}

/// Mask voxels are those with value > 0.5.
inline RoiMask read_mhd_mask(const fs::path& path) {
  MetaImageHeader h;
  const auto samples = read_mhd_samples(path, &h);
  std::vector<std::uint8_t> bits(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) bits[i] = samples[i] > 0.5;
  return RoiMask(h.dims, std::move(bits));
}

/// Writes `<stem>.mhd` and `<stem>.raw` (little-endian). Values must be exactly
/// representable in the element type.
inline void write_mhd(const fs::path& path, const Dims& dims, const Spacing& spacing, std::span<const double> samples,
                      ElementType type = ElementType::MET_FLOAT) {
  if (samples.size() != dims.size()) throw Error("write_mhd: sample count does not match dims");
  const std::size_t width = element_size(type);
  std::vector<char> bytes(samples.size() * width);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const double v = samples[i];
    char* p = bytes.data() + i * width;
    bool exact = true;
    switch (type) {
      case ElementType::MET_SHORT: {
        const auto s = static_cast<std::int16_t>(std::clamp(v, -32768.0, 32767.0));
        exact = s == v;
        std::memcpy(p, &s, 2);
        break;
      }
      case ElementType::MET_FLOAT: {
        const auto f = static_cast<float>(v);
        exact = static_cast<double>(f) == v;
        std::memcpy(p, &f, 4);
        break;
      }
      case ElementType::MET_DOUBLE:
        std::memcpy(p, &v, 8);
        break;
      case ElementType::MET_UCHAR: {
        const auto u = static_cast<std::uint8_t>(std::clamp(v, 0.0, 255.0));
        exact = u == v;
        std::memcpy(p, &u, 1);
        break;
      }
    }
    if (!exact) throw Error("write_mhd: value " + format_double(v) + " is not representable as " + to_string(type));
    if constexpr (std::endian::native == std::endian::big) detail::swap_bytes(p, width);
  }
  fs::path raw = path;
  raw.replace_extension(".raw");
  {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path.string());
    out << "ObjectType = Image\n"
        << "NDims = 3\n"
        << "BinaryData = True\n"
        << "BinaryDataByteOrderMSB = False\n"
        << "CompressedData = False\n"
        << "ElementSpacing = " << format_double(spacing.x) << " " << format_double(spacing.y) << " "
        << format_double(spacing.z) << "\n"
        << "DimSize = " << dims.x << " " << dims.y << " " << dims.z << "\n"
        << "ElementType = " << to_string(type) << "\n"
        << "ElementDataFile = " << raw.filename().string() << "\n";
  }
  std::ofstream out(raw, std::ios::binary);
  if (!out) throw Error("cannot write " + raw.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

inline void write_mhd(const fs::path& path, const Volume& v, ElementType type = ElementType::MET_FLOAT) {
  write_mhd(path, v.dims(), v.spacing(), v.data(), type);
}

inline void write_mhd(const fs::path& path, const RoiMask& m, const Spacing& spacing) {
  std::vector<double> samples(m.dims().size());
  for (std::size_t i = 0; i < samples.size(); ++i) samples[i] = m.contains(i) ? 1.0 : 0.0;
  write_mhd(path, m.dims(), spacing, samples, ElementType::MET_UCHAR);
}

// ---------------------------------------------------------------------------
// Feature tables

struct FeatureRow {
  std::string case_id;
  FlavourKey flavour;
  std::vector<MaybeValue> values;

  friend bool operator==(const FeatureRow& a, const FeatureRow& b) {
    if (a.case_id != b.case_id || !(a.flavour == b.flavour) || a.values.size() != b.values.size()) return false;
    for (std::size_t i = 0; i < a.values.size(); ++i) {
      if (a.values[i].has_value() != b.values[i].has_value()) return false;
      if (a.values[i] && std::memcmp(&*a.values[i], &*b.values[i], sizeof(double)) != 0) return false;
    }
    return true;
  }
};

/// Rows keyed by (case_id, flavour) over named feature columns; missing cells are explicit.
struct FeatureTable {
  std::vector<std::string> columns;
  std::vector<FeatureRow> rows;

  void validate() const {
    std::set<std::string> names;
    for (const auto& c : columns) {
      if (c.empty() || c.find_first_of(",\"\n") != std::string::npos)
        throw Error("feature table column name '" + c + "' is invalid");
      if (!names.insert(c).second) throw Error("feature table has duplicate column '" + c + "'");
    }
    std::set<std::pair<std::string, std::string>> keys;
    for (const auto& r : rows) {
      if (r.case_id.empty() || r.case_id.find_first_of(",\"\n") != std::string::npos)
        throw Error("feature table case_id '" + r.case_id + "' is invalid");
      if (r.values.size() != columns.size())
        throw Error("feature table row for '" + r.case_id + "' is not rectangular");
      if (!keys.insert({r.case_id, r.flavour.str()}).second)
        throw Error("feature table has duplicate row (" + r.case_id + ", " + r.flavour.str() + ")");
      for (const auto& v : r.values)
        if (v && !std::isfinite(*v)) throw Error("feature table cell is not finite");
    }
  }

  friend bool operator==(const FeatureTable&, const FeatureTable&) = default;
};

enum class TableFormat { CSV, JSON };

inline std::string feature_table_csv(const FeatureTable& t) {
  t.validate();
  std::string s = "case_id,flavour";
  for (const auto& c : t.columns) s += "," + c;
  s += "\n";
  for (const auto& r : t.rows) {
    s += r.case_id + "," + r.flavour.str();
    for (const auto& v : r.values) s += "," + (v ? format_double17(*v) : std::string());
    s += "\n";
  }
  return s;
}

inline nlohmann::json feature_table_json(const FeatureTable& t) {
  t.validate();
  nlohmann::json j;
  j["columns"] = t.columns;
  j["rows"] = nlohmann::json::array();
  for (const auto& r : t.rows) {
    nlohmann::json vals = nlohmann::json::array();
    for (const auto& v : r.values) vals.push_back(v ? nlohmann::json(*v) : nlohmann::json(nullptr));
    j["rows"].push_back({{"case_id", r.case_id}, {"flavour", r.flavour.str()}, {"values", vals}});
  }
  return j;
}

inline void write_text_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
  if (!out) throw Error("write failed for " + path.string());
}

inline std::string read_text_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_feature_table(const FeatureTable& t, const fs::path& path, TableFormat format) {
  write_text_file(path, format == TableFormat::CSV ? feature_table_csv(t) : feature_table_json(t).dump(2) + "\n");
}

inline FeatureTable parse_feature_table_csv(const std::string& text) {
  auto split = [](const std::string& line) {
    std::vector<std::string> f;
    std::size_t pos = 0;
    while (true) {
      const auto c = line.find(',', pos);
      f.push_back(line.substr(pos, c == std::string::npos ? std::string::npos : c - pos));
      if (c == std::string::npos) break;
      pos = c + 1;
    }
    return f;
  };
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw Error("feature table CSV is empty");
  auto head = split(line);
  if (head.size() < 2 || head[0] != "case_id" || head[1] != "flavour")
    throw Error("feature table CSV header must start with case_id,flavour");
  FeatureTable t;
  t.columns.assign(head.begin() + 2, head.end());
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    auto f = split(line);
    if (f.size() != head.size()) throw Error("feature table CSV line " + std::to_string(lineno) + " has wrong width");
    FeatureRow r{f[0], FlavourKey::parse(f[1]), {}};
    for (std::size_t i = 2; i < f.size(); ++i)
      r.values.push_back(f[i].empty() ? MaybeValue{} : MaybeValue{parse_double(f[i])});
    t.rows.push_back(std::move(r));
  }
  t.validate();
  return t;
}

inline FeatureTable parse_feature_table_json(const nlohmann::json& j) {
  FeatureTable t;
  t.columns = j.at("columns").get<std::vector<std::string>>();
  for (const auto& r : j.at("rows")) {
    FeatureRow row{r.at("case_id").get<std::string>(), FlavourKey::parse(r.at("flavour").get<std::string>()), {}};
    for (const auto& v : r.at("values")) row.values.push_back(v.is_null() ? MaybeValue{} : MaybeValue{v.get<double>()});
    t.rows.push_back(std::move(row));
  }
  t.validate();
  return t;
}

inline FeatureTable read_feature_table(const fs::path& path) {
  const std::string text = read_text_file(path);
  if (path.extension() == ".json") return parse_feature_table_json(nlohmann::json::parse(text));
  return parse_feature_table_csv(text);
}

}  // namespace tensorrad
