#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace kpc {

// Cell value standing in for a missing or empty raw value.
inline constexpr std::string_view kEmptyCell = "<Empty>";

inline constexpr std::size_t kDefaultRecordCap = 3;

enum class SourceFormat { Csv, Xml, Json };

std::string_view to_string(SourceFormat format);
std::optional<SourceFormat> format_from_string(std::string_view name);
// Guesses the format from a file extension (".csv", ".xml", ".json").
std::optional<SourceFormat> format_from_path(std::string_view path);

// One structured source flattened to a list of records over ordered
// attributes. Rows are stored positionally: rows()[r][j] is the value of
// attributes()[j] in record r, so every record carries every attribute.
class Table {
 public:
  using Row = std::vector<std::string>;

  // Throws FormatError on duplicate attribute names or ragged rows and
  // replaces empty cells with kEmptyCell.
  Table(std::string source_id, SourceFormat format,
        std::vector<std::string> attributes, std::vector<Row> rows);

  const std::string& source_id() const { return source_id_; }
  SourceFormat format() const { return format_; }
  const std::vector<std::string>& attributes() const { return attributes_; }
  const std::vector<Row>& rows() const { return rows_; }
  std::size_t record_count() const { return rows_.size(); }

  bool has_attribute(std::string_view name) const;
  // Value of `attribute` in record `r`; throws std::out_of_range.
  const std::string& cell(std::size_t r, std::string_view attribute) const;

  friend bool operator==(const Table&, const Table&) = default;

 private:
  std::string source_id_;
  SourceFormat format_;
  std::vector<std::string> attributes_;
  std::vector<Row> rows_;
};

struct SerializedTable {
  std::string text;
  std::size_t record_cap = kDefaultRecordCap;
};

// Parses raw CSV/XML/JSON into a Table.
//
// CSV: first row is the header, RFC 4180 quoting, short rows padded.
// XML: records are the most frequent child tag of the root element; their
//      child elements (flattened with dotted paths) become attributes.
// JSON: a top-level array of objects, or an object holding exactly one
//      array-of-objects field. Nested objects flatten to dotted paths;
//      numbers keep their source spelling.
//
// Throws FormatError on malformed input and EmptySourceError when no
// attributes are found.
Table parse_source(std::string_view raw, SourceFormat format,
                   std::string source_id);

Table load_source(const std::string& path, std::string source_id = {});

// JSON array of the first min(cap, R) records, keys in attribute order.
// The output is byte-stable for identical input.
SerializedTable serialize_table(const Table& table,
                                std::size_t record_cap = kDefaultRecordCap);

// Two-space indented JSON with keys kept in insertion order and no
// trailing whitespace. Throws FormatError when `text` is not JSON.
std::string canonicalize(std::string_view text);

}  // namespace kpc
