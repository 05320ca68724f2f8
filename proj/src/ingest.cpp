#include "kpc/ingest.hpp"

#include <algorithm>
#include <cctype>
#include <boost/property_tree/ptree.hpp>
#include <boost/property_tree/xml_parser.hpp>
#include <json.hpp>
#include <map>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "kpc/errors.hpp"
#include "kpc/io.hpp"

namespace kpc {

using ordered_json = nlohmann::ordered_json;

namespace {

constexpr auto kWhitespace = " \t\r\n";

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(kWhitespace);
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(kWhitespace);
  return std::string(s.substr(first, last - first + 1));
}

// Collects flattened records and the union of their keys in first-seen order.
class RecordCollector {
 public:
  void begin_record() { records_.emplace_back(); }

  void put(const std::string& path, std::string value) {
    auto& rec = records_.back();
    if (rec.contains(path)) return;  // first occurrence wins
    if (seen_.insert(path).second) attributes_.push_back(path);
    rec.emplace(path, std::move(value));
  }

  Table finish(std::string source_id, SourceFormat format) && {
    std::vector<Table::Row> rows;
    rows.reserve(records_.size());
    for (auto& rec : records_) {
      Table::Row row;
      row.reserve(attributes_.size());
      for (const auto& a : attributes_) {
        auto it = rec.find(a);
        row.push_back(it == rec.end() ? std::string(kEmptyCell) : std::move(it->second));
      }
      rows.push_back(std::move(row));
    }
    return Table(std::move(source_id), format, std::move(attributes_), std::move(rows));
  }

 private:
  std::vector<std::unordered_map<std::string, std::string>> records_;
  std::vector<std::string> attributes_;
  std::unordered_set<std::string> seen_;
};

// ---------------------------------------------------------------- CSV

std::vector<std::vector<std::string>> split_csv(std::string_view text) {
  if (text.starts_with("\xEF\xBB\xBF")) text.remove_prefix(3);

  std::vector<std::vector<std::string>> out;
  std::vector<std::string> row;
  std::string field;
  bool in_quotes = false;
  bool field_quoted = false;

  auto end_field = [&] {
    row.push_back(std::move(field));
    field.clear();
    field_quoted = false;
  };
  auto end_row = [&] {
    end_field();
    // a blank line yields a single unquoted empty field
    if (!(row.size() == 1 && row[0].empty())) out.push_back(std::move(row));
    row.clear();
  };

  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          in_quotes = false;
        }
      } else {
        field.push_back(c);
      }
      continue;
    }
    switch (c) {
      case '"':
        if (field.empty() && !field_quoted) {
          in_quotes = true;
          field_quoted = true;
        } else {
          field.push_back(c);
        }
        break;
      case ',':
        end_field();
        break;
      case '\r':
        if (i + 1 < text.size() && text[i + 1] == '\n') ++i;
        end_row();
        break;
      case '\n':
        end_row();
        break;
      default:
        field.push_back(c);
    }
  }
  if (in_quotes) throw FormatError("CSV: unterminated quoted field");
  if (!field.empty() || field_quoted || !row.empty()) end_row();
  return out;
}

Table parse_csv(std::string_view raw, std::string source_id) {
  auto lines = split_csv(raw);
  if (lines.empty()) throw EmptySourceError("CSV: no header row");

  std::vector<std::string> header;
  for (auto& name : lines.front()) {
    auto t = trim(name);
    if (t.empty()) throw FormatError("CSV: empty column name in header");
    header.push_back(std::move(t));
  }

  std::vector<Table::Row> rows;
  for (std::size_t r = 1; r < lines.size(); ++r) {
    auto& fields = lines[r];
    if (fields.size() > header.size()) {
      throw FormatError("CSV: row " + std::to_string(r + 1) + " has " +
                        std::to_string(fields.size()) + " fields, header has " +
                        std::to_string(header.size()));
    }
    fields.resize(header.size());
    rows.push_back(std::move(fields));
  }
  return Table(std::move(source_id), SourceFormat::Csv, std::move(header), std::move(rows));
}

// ---------------------------------------------------------------- JSON

// DOM builder that keeps every scalar outside arrays as text so that numbers
// retain their source spelling ("1.50" stays "1.50"). Inside arrays values
// keep their JSON type, since arrays end up as compact JSON text.
class TextScalarBuilder : public nlohmann::json_sax<ordered_json> {
 public:
  explicit TextScalarBuilder(ordered_json& root) : root_(root) {}

  bool null() override { return put(nullptr); }
  bool boolean(bool v) override { return in_array_ ? put(v) : put(v ? "true" : "false"); }
  bool number_integer(number_integer_t v) override { return in_array_ ? put(v) : put(std::to_string(v)); }
  bool number_unsigned(number_unsigned_t v) override { return in_array_ ? put(v) : put(std::to_string(v)); }
  bool number_float(number_float_t v, const string_t& raw) override { return in_array_ ? put(v) : put(raw); }
  bool string(string_t& v) override { return put(v); }
  bool binary(binary_t&) override { return put(nullptr); }

  bool start_object(std::size_t) override {
    stack_.push_back(slot(ordered_json::object()));
    return true;
  }
  bool key(string_t& k) override {
    key_ = k;
    return true;
  }
  bool end_object() override {
    stack_.pop_back();
    return true;
  }
  bool start_array(std::size_t) override {
    // arrays at depth 0 and 1 can only be the record list
    if (stack_.size() >= 2) ++in_array_;
    stack_.push_back(slot(ordered_json::array()));
    return true;
  }
  bool end_array() override {
    stack_.pop_back();
    if (stack_.size() >= 2) --in_array_;
    return true;
  }
  bool parse_error(std::size_t pos, const std::string&,
                   const nlohmann::detail::exception& ex) override {
    throw FormatError("JSON: " + std::string(ex.what()) + " at byte " + std::to_string(pos));
  }

 private:
  template <class V>
  bool put(V&& v) {
    slot(ordered_json(std::forward<V>(v)));
    return true;
  }

  ordered_json* slot(ordered_json v) {
    if (stack_.empty()) {
      root_ = std::move(v);
      return &root_;
    }
    auto* top = stack_.back();
    if (top->is_array()) {
      top->push_back(std::move(v));
      return &top->back();
    }
    auto& dst = (*top)[key_];
    dst = std::move(v);
    return &dst;
  }

  ordered_json& root_;
  std::vector<ordered_json*> stack_;
  std::string key_;
  int in_array_ = 0;
};

ordered_json parse_json_text_scalars(std::string_view raw) {
  ordered_json root;
  TextScalarBuilder builder(root);
  nlohmann::ordered_json::sax_parse(raw, &builder);
  return root;
}

void flatten_json(const ordered_json& value, const std::string& path, RecordCollector& out) {
  if (value.is_object()) {
    for (const auto& [k, v] : value.items()) {
      flatten_json(v, path.empty() ? k : path + "." + k, out);
    }
    return;
  }
  if (path.empty()) return;
  if (value.is_null()) {
    out.put(path, std::string(kEmptyCell));
  } else if (value.is_string()) {
    out.put(path, value.get<std::string>());
  } else {
    // arrays stay as compact JSON text
    out.put(path, value.dump(-1, ' ', false, ordered_json::error_handler_t::replace));
  }
}

bool is_array_of_objects(const ordered_json& v) {
  return v.is_array() && !v.empty() &&
         std::all_of(v.begin(), v.end(), [](const auto& e) { return e.is_object(); });
}

Table parse_json(std::string_view raw, std::string source_id) {
  const ordered_json doc = parse_json_text_scalars(raw);

  const ordered_json* records = nullptr;
  if (doc.is_array()) {
    if (!std::all_of(doc.begin(), doc.end(), [](const auto& e) { return e.is_object(); })) {
      throw FormatError("JSON: top-level array must contain only objects");
    }
    records = &doc;
  } else if (doc.is_object()) {
    for (const auto& [k, v] : doc.items()) {
      if (!is_array_of_objects(v)) continue;
      if (records) throw FormatError("JSON: more than one array-of-objects field");
      records = &v;
    }
    if (!records) throw FormatError("JSON: no array-of-objects field in top-level object");
  } else {
    throw FormatError("JSON: expected an array or object at top level");
  }

  RecordCollector collector;
  for (const auto& rec : *records) {
    collector.begin_record();
    flatten_json(rec, "", collector);
  }
  return std::move(collector).finish(std::move(source_id), SourceFormat::Json);
}

// ---------------------------------------------------------------- XML

namespace pt = boost::property_tree;

bool is_markup_node(const std::string& tag) {
  return tag == "<xmlattr>" || tag == "<xmlcomment>";
}

void flatten_xml(const pt::ptree& node, const std::string& path, RecordCollector& out) {
  bool has_elements = false;
  for (const auto& [tag, child] : node) {
    if (tag == "<xmlattr>") {
      for (const auto& [attr, value] : child) {
        out.put(path.empty() ? "@" + attr : path + ".@" + attr, trim(value.data()));
      }
      continue;
    }
    if (is_markup_node(tag)) continue;
    has_elements = true;
    flatten_xml(child, path.empty() ? tag : path + "." + tag, out);
  }
  if (!has_elements && !path.empty()) out.put(path, trim(node.data()));
}

Table parse_xml(std::string_view raw, std::string source_id) {
  pt::ptree doc;
  try {
    std::istringstream in{std::string(raw)};
    pt::read_xml(in, doc);
  } catch (const pt::xml_parser_error& e) {
    throw FormatError(std::string("XML: ") + e.what());
  }

  const pt::ptree* root = nullptr;
  for (const auto& [tag, child] : doc) {
    if (is_markup_node(tag)) continue;
    root = &child;
    break;
  }
  if (!root) throw EmptySourceError("XML: no root element");

  // record tag = most frequent child tag of the root; ties go to the first seen
  std::vector<std::string> order;
  std::map<std::string, std::size_t> counts;
  for (const auto& [tag, child] : *root) {
    if (is_markup_node(tag)) continue;
    if (counts[tag]++ == 0) order.push_back(tag);
  }
  if (order.empty()) throw EmptySourceError("XML: root element has no children");
  std::string record_tag = order.front();
  for (const auto& tag : order) {
    if (counts[tag] > counts[record_tag]) record_tag = tag;
  }

  RecordCollector collector;
  for (const auto& [tag, child] : *root) {
    if (tag != record_tag) continue;
    collector.begin_record();
    flatten_xml(child, "", collector);
    // text-only records contribute a single attribute named after the tag
    const bool leaf = std::none_of(child.begin(), child.end(),
                                   [](const auto& kv) { return !is_markup_node(kv.first); });
    if (leaf) collector.put(record_tag, trim(child.data()));
  }
  return std::move(collector).finish(std::move(source_id), SourceFormat::Xml);
}

ordered_json table_rows_json(const Table& table, std::size_t count) {
  auto arr = ordered_json::array();
  for (std::size_t r = 0; r < count; ++r) {
    ordered_json obj = ordered_json::object();
    const auto& row = table.rows()[r];
    for (std::size_t j = 0; j < row.size(); ++j) obj[table.attributes()[j]] = row[j];
    arr.push_back(std::move(obj));
  }
  return arr;
}

}  // namespace

std::string_view to_string(SourceFormat format) {
  switch (format) {
    case SourceFormat::Csv: return "csv";
    case SourceFormat::Xml: return "xml";
    case SourceFormat::Json: return "json";
  }
  return "?";
}

std::optional<SourceFormat> format_from_string(std::string_view name) {
  std::string lower(name);
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (lower == "csv") return SourceFormat::Csv;
  if (lower == "xml") return SourceFormat::Xml;
  if (lower == "json") return SourceFormat::Json;
  return std::nullopt;
}

std::optional<SourceFormat> format_from_path(std::string_view path) {
  const auto dot = path.rfind('.');
  if (dot == std::string_view::npos) return std::nullopt;
  return format_from_string(path.substr(dot + 1));
}

Table::Table(std::string source_id, SourceFormat format, std::vector<std::string> attributes,
             std::vector<Row> rows)
    : source_id_(std::move(source_id)),
      format_(format),
      attributes_(std::move(attributes)),
      rows_(std::move(rows)) {
  if (attributes_.empty()) throw EmptySourceError("source '" + source_id_ + "' has no attributes");
  std::unordered_set<std::string_view> names;
  for (const auto& a : attributes_) {
    if (!names.insert(a).second) throw FormatError("duplicate attribute '" + a + "'");
  }
  for (auto& row : rows_) {
    if (row.size() != attributes_.size()) {
      throw FormatError("record width " + std::to_string(row.size()) + " != attribute count " +
                        std::to_string(attributes_.size()));
    }
    for (auto& cell : row) {
      if (cell.empty()) cell = kEmptyCell;
    }
  }
}

bool Table::has_attribute(std::string_view name) const {
  return std::find(attributes_.begin(), attributes_.end(), name) != attributes_.end();
}

const std::string& Table::cell(std::size_t r, std::string_view attribute) const {
  const auto it = std::find(attributes_.begin(), attributes_.end(), attribute);
  if (it == attributes_.end()) throw std::out_of_range("no attribute " + std::string(attribute));
  return rows_.at(r)[static_cast<std::size_t>(it - attributes_.begin())];
}

Table parse_source(std::string_view raw, SourceFormat format, std::string source_id) {
  switch (format) {
    case SourceFormat::Csv: return parse_csv(raw, std::move(source_id));
    case SourceFormat::Xml: return parse_xml(raw, std::move(source_id));
    case SourceFormat::Json: return parse_json(raw, std::move(source_id));
  }
  throw FormatError("unknown source format");
}

Table load_source(const std::string& path, std::string source_id) {
  const auto format = format_from_path(path);
  if (!format) throw FormatError("cannot infer source format from '" + path + "'");
  if (source_id.empty()) source_id = std::filesystem::path(path).stem().string();
  return parse_source(read_file(path), *format, std::move(source_id));
}

SerializedTable serialize_table(const Table& table, std::size_t record_cap) {
  if (record_cap == 0) throw std::invalid_argument("record_cap must be >= 1");
  const auto n = std::min(record_cap, table.record_count());
  return SerializedTable{
      table_rows_json(table, n).dump(2, ' ', false, ordered_json::error_handler_t::replace),
      record_cap};
}

std::string canonicalize(std::string_view text) {
  ordered_json doc;
  try {
    doc = ordered_json::parse(text);
  } catch (const ordered_json::parse_error& e) {
    throw FormatError(std::string("JSON: ") + e.what());
  }
  return doc.dump(2, ' ', false, ordered_json::error_handler_t::replace);
}

}  // namespace kpc
