#pragma once

// Socio-demographic schema and multi-hot encoding, embedding tables, and
// feature fusion.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "persp/corpus.hpp"
#include "persp/error.hpp"
#include "persp/io.hpp"

namespace persp {

/// Category used for an attribute the annotator did not report.
inline constexpr std::string_view kMissingCategory = "⟂missing⟂";

struct Attribute {
  std::string name;
  std::vector<std::string> categories;  // last one is always kMissingCategory

  bool operator==(const Attribute&) const = default;
};

class SocioSchema {
 public:
  SocioSchema() = default;
  explicit SocioSchema(std::vector<Attribute> attributes) : attributes_(std::move(attributes)) {
    std::set<std::string> names;
    std::size_t offset = 0;
    for (const auto& a : attributes_) {
      if (!names.insert(a.name).second) throw SchemaError("duplicate attribute '" + a.name + "'");
      std::set<std::string> cats(a.categories.begin(), a.categories.end());
      if (cats.size() != a.categories.size())
        throw SchemaError("duplicate category in attribute '" + a.name + "'");
      if (a.categories.empty()) throw SchemaError("attribute '" + a.name + "' has no categories");
      offsets_.push_back(offset);
      offset += a.categories.size();
    }
    total_width_ = offset;
  }

  const std::vector<Attribute>& attributes() const { return attributes_; }
  std::size_t total_width() const { return total_width_; }
  std::size_t offset(std::size_t attr) const { return offsets_.at(attr); }

  std::optional<std::size_t> attribute_index(std::string_view name) const {
    for (std::size_t i = 0; i < attributes_.size(); ++i)
      if (attributes_[i].name == name) return i;
    return std::nullopt;
  }

  std::optional<std::size_t> category_index(std::size_t attr, std::string_view category) const {
    const auto& cats = attributes_.at(attr).categories;
    for (std::size_t i = 0; i < cats.size(); ++i)
      if (cats[i] == category) return i;
    return std::nullopt;
  }

  std::size_t missing_index(std::size_t attr) const {
    return *category_index(attr, kMissingCategory);
  }

  bool operator==(const SocioSchema&) const = default;

 private:
  std::vector<Attribute> attributes_;
  std::vector<std::size_t> offsets_;
  std::size_t total_width_ = 0;
};

/// Attributes in order of first appearance (profiles iterated in map order,
/// assignments in name order); categories sorted, then the missing category.
inline SocioSchema build_schema(std::span<const AnnotatorProfile> profiles) {
  if (profiles.empty()) throw SchemaError("cannot build a schema from zero profiles");
  std::vector<std::string> order;
  std::map<std::string, std::set<std::string>> cats;
  for (const auto& p : profiles)
    for (const auto& [attr, value] : p.assignments) {
      if (!cats.contains(attr)) order.push_back(attr);
      if (value != kMissingCategory) cats[attr].insert(value);
      else cats[attr];
    }
  std::vector<Attribute> attrs;
  for (const auto& name : order) {
    Attribute a{name, {cats[name].begin(), cats[name].end()}};
    a.categories.emplace_back(kMissingCategory);
    attrs.push_back(std::move(a));
  }
  return SocioSchema(std::move(attrs));
}

inline SocioSchema build_schema(const ProfileMap& profiles) {
  std::vector<AnnotatorProfile> list;
  for (const auto& [id, p] : profiles) list.push_back(p);
  return build_schema(std::span<const AnnotatorProfile>(list));
}

/// One hot slot per attribute. Unknown categories map to the missing slot
/// unless `strict`, in which case they raise.
inline Eigen::VectorXd encode_multihot(const AnnotatorProfile& profile, const SocioSchema& schema,
                                       bool strict = false) {
  Eigen::VectorXd v = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(schema.total_width()));
  for (const auto& [attr, value] : profile.assignments)
    if (!schema.attribute_index(attr) && strict)
      throw SchemaError("profile '" + profile.annotator_id + "' has unknown attribute '" + attr + "'");
  for (std::size_t a = 0; a < schema.attributes().size(); ++a) {
    const auto& attr = schema.attributes()[a];
    std::size_t slot = schema.missing_index(a);
    if (auto it = profile.assignments.find(attr.name); it != profile.assignments.end() && !it->second.empty()) {
      if (auto c = schema.category_index(a, it->second)) {
        slot = *c;
      } else if (strict) {
        throw SchemaError("attribute '" + attr.name + "' has no category '" + it->second + "'");
      }
    }
    v[static_cast<Eigen::Index>(schema.offset(a) + slot)] = 1.0;
  }
  return v;
}

/// Inverse of encode_multihot; missing attributes come back as kMissingCategory.
inline AnnotatorProfile decode_multihot(const Eigen::VectorXd& v, const SocioSchema& schema,
                                        std::string annotator_id = {}) {
  if (static_cast<std::size_t>(v.size()) != schema.total_width()) throw SchemaError("multi-hot width mismatch");
  AnnotatorProfile p{std::move(annotator_id), {}};
  for (std::size_t a = 0; a < schema.attributes().size(); ++a) {
    const auto& attr = schema.attributes()[a];
    std::optional<std::size_t> hot;
    for (std::size_t c = 0; c < attr.categories.size(); ++c)
      if (v[static_cast<Eigen::Index>(schema.offset(a) + c)] != 0.0) {
        if (hot) throw SchemaError("attribute '" + attr.name + "' has more than one hot slot");
        hot = c;
      }
    if (!hot) throw SchemaError("attribute '" + attr.name + "' has no hot slot");
    p.assignments[attr.name] = attr.categories[*hot];
  }
  return p;
}

/// Category of `attribute` for a profile, resolving absent values to missing.
inline std::string category_of(const AnnotatorProfile& p, const std::string& attribute) {
  auto it = p.assignments.find(attribute);
  if (it == p.assignments.end() || it->second.empty()) return std::string(kMissingCategory);
  return it->second;
}

/// Profile CSV: `annotator_id` then one column per attribute; empty = missing.
inline ProfileMap parse_profiles(std::string_view csv) {
  const io::CsvTable table = io::parse_csv(csv);
  const std::size_t id_col = table.require_column("annotator_id");
  ProfileMap out;
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    const auto& row = table.rows[i];
    if (row.size() != table.header.size())
      throw ParseError("profile row " + std::to_string(i + 1) + ": expected " +
                           std::to_string(table.header.size()) + " fields",
                       i + 1);
    AnnotatorProfile p;
    p.annotator_id = row[id_col];
    for (std::size_t c = 0; c < row.size(); ++c) {
      if (c == id_col) continue;
      p.assignments[table.header[c]] = row[c].empty() ? std::string(kMissingCategory) : row[c];
    }
    if (!out.emplace(p.annotator_id, p).second)
      throw DuplicateError("duplicate profile '" + p.annotator_id + "'", {i + 1});
  }
  return out;
}

inline ProfileMap load_profiles(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw DataError("profile file '" + path.string() + "' not found");
  return parse_profiles(io::read_file(path));
}

/// Columns follow `attribute_order`; missing values are written as empty cells.
inline std::string profiles_to_csv(const ProfileMap& profiles, const std::vector<std::string>& attribute_order) {
  std::string out;
  io::Row header{"annotator_id"};
  header.insert(header.end(), attribute_order.begin(), attribute_order.end());
  io::append_csv_row(out, header);
  for (const auto& [id, p] : profiles) {
    io::Row row{id};
    for (const auto& attr : attribute_order) {
      const std::string c = category_of(p, attr);
      row.push_back(c == kMissingCategory ? std::string() : c);
    }
    io::append_csv_row(out, row);
  }
  return out;
}

/// Key -> fixed-width finite vector.
class EmbeddingTable {
 public:
  EmbeddingTable() = default;
  explicit EmbeddingTable(std::size_t dimension) : dimension_(dimension) {
    if (dimension == 0) throw DataError("embedding dimension must be >= 1");
  }

  std::size_t dimension() const { return dimension_; }
  std::size_t size() const { return keys_.size(); }
  const std::vector<std::string>& keys() const { return keys_; }

  void add(std::string key, std::span<const double> values) {
    if (values.size() != dimension_)
      throw DataError("embedding '" + key + "' has " + std::to_string(values.size()) + " components, expected " +
                      std::to_string(dimension_));
    for (double x : values)
      if (!std::isfinite(x)) throw NumericError("embedding '" + key + "' has a non-finite component");
    if (index_.contains(key)) throw DuplicateError("duplicate embedding key '" + key + "'", {});
    index_.emplace(key, keys_.size());
    keys_.push_back(std::move(key));
    data_.insert(data_.end(), values.begin(), values.end());
  }

  bool contains(const std::string& key) const { return index_.contains(key); }

  std::span<const double> at(const std::string& key) const {
    auto it = index_.find(key);
    if (it == index_.end()) throw DataError("no embedding for key '" + key + "'");
    return {data_.data() + it->second * dimension_, dimension_};
  }

  std::span<const double> row(std::size_t i) const { return {data_.data() + i * dimension_, dimension_}; }

  bool operator==(const EmbeddingTable& o) const {
    return dimension_ == o.dimension_ && keys_ == o.keys_ && data_ == o.data_;
  }

 private:
  std::size_t dimension_ = 0;
  std::vector<std::string> keys_;
  std::map<std::string, std::size_t> index_;
  std::vector<double> data_;
};

/// CSV with a `key` column followed by d0..d{n-1}.
inline EmbeddingTable parse_embeddings_csv(std::string_view csv) {
  const io::CsvTable table = io::parse_csv(csv);
  if (table.header.empty() || table.header[0] != "key") throw SchemaError("embedding CSV must start with 'key'");
  const std::size_t dim = table.header.size() - 1;
  for (std::size_t d = 0; d < dim; ++d)
    if (table.header[d + 1] != "d" + std::to_string(d))
      throw SchemaError("embedding column " + std::to_string(d + 1) + " must be named d" + std::to_string(d));
  EmbeddingTable out(dim);
  std::vector<double> values(dim);
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    const auto& row = table.rows[i];
    const std::size_t row_no = i + 1;
    if (row.size() != dim + 1)
      throw ParseError("embedding row " + std::to_string(row_no) + " has " + std::to_string(row.size() - 1) +
                           " components, expected " + std::to_string(dim),
                       row_no);
    for (std::size_t d = 0; d < dim; ++d) {
      const std::string& cell = row[d + 1];
      if (!io::parse_double(cell, values[d]))
        throw ParseError("embedding row " + std::to_string(row_no) + ": bad number '" + cell + "'", row_no);
      if (!std::isfinite(values[d]))
        throw NumericError("embedding row " + std::to_string(row_no) + " has a non-finite component");
    }
    out.add(row[0], values);
  }
  return out;
}

inline std::string embeddings_to_csv(const EmbeddingTable& table) {
  std::string out;
  io::Row header{"key"};
  for (std::size_t d = 0; d < table.dimension(); ++d) header.push_back("d" + std::to_string(d));
  io::append_csv_row(out, header);
  for (std::size_t i = 0; i < table.size(); ++i) {
    io::Row row{table.keys()[i]};
    for (double x : table.row(i)) row.push_back(io::format_double(x));
    io::append_csv_row(out, row);
  }
  return out;
}

// PEMB binary layout: "PEMB", u32 dim, u32 count, then per row a u32 key
// length, key bytes and `dim` little-endian f32 values.
namespace detail {
inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}
inline std::uint32_t get_u32(std::string_view in, std::size_t& pos) {
  if (pos + 4 > in.size()) throw DataError("truncated PEMB file");
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(in[pos + i])) << (8 * i);
  pos += 4;
  return v;
}
}  // namespace detail

inline std::string embeddings_to_pemb(const EmbeddingTable& table) {
  std::string out = "PEMB";
  detail::put_u32(out, static_cast<std::uint32_t>(table.dimension()));
  detail::put_u32(out, static_cast<std::uint32_t>(table.size()));
  for (std::size_t i = 0; i < table.size(); ++i) {
    const auto& key = table.keys()[i];
    detail::put_u32(out, static_cast<std::uint32_t>(key.size()));
    out += key;
    for (double x : table.row(i)) detail::put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(x)));
  }
  return out;
}

inline EmbeddingTable parse_embeddings_pemb(std::string_view bytes) {
  if (bytes.substr(0, 4) != "PEMB") throw SchemaError("missing PEMB magic");
  std::size_t pos = 4;
  const std::uint32_t dim = detail::get_u32(bytes, pos);
  const std::uint32_t count = detail::get_u32(bytes, pos);
  EmbeddingTable out(dim);
  std::vector<double> values(dim);
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint32_t len = detail::get_u32(bytes, pos);
    if (pos + len > bytes.size()) throw DataError("truncated PEMB file");
    std::string key(bytes.substr(pos, len));
    pos += len;
    for (std::uint32_t d = 0; d < dim; ++d) {
      values[d] = std::bit_cast<float>(detail::get_u32(bytes, pos));
      if (!std::isfinite(values[d]))
        throw NumericError("PEMB row " + std::to_string(i + 1) + " has a non-finite component");
    }
    out.add(std::move(key), values);
  }
  return out;
}

/// Dispatches on the PEMB magic bytes, otherwise reads CSV.
inline EmbeddingTable load_embeddings(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw DataError("embedding file '" + path.string() + "' not found");
  const std::string bytes = io::read_file(path);
  if (bytes.rfind("PEMB", 0) == 0) return parse_embeddings_pemb(bytes);
  return parse_embeddings_csv(bytes);
}

/// [text ∥ socio]; an empty socio vector leaves the text vector unchanged.
inline Eigen::VectorXd fuse(const Eigen::VectorXd& text_vec, const Eigen::VectorXd& socio_vec = {}) {
  Eigen::VectorXd out(text_vec.size() + socio_vec.size());
  out << text_vec, socio_vec;
  return out;
}

}  // namespace persp
