#pragma once

// Small helpers for the hand-formatted JSON files (ontology, models). These
// keep each triple on one line, which nlohmann's pretty printer cannot do.

#include <json.hpp>
#include <string>
#include <string_view>
#include <vector>

namespace kpc::detail {

inline std::string json_quote(std::string_view s) {
  return nlohmann::json(std::string(s))
      .dump(-1, ' ', false, nlohmann::json::error_handler_t::replace);
}

// `"key": [` rows `]` with two-space indentation inside a top-level object.
// Each row is a list of strings written on one line.
inline void append_rows(std::string& out, std::string_view key,
                        const std::vector<std::vector<std::string>>& rows) {
  out += "  " + json_quote(key) + ": [";
  if (rows.empty()) {
    out += "]";
    return;
  }
  out += "\n";
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out += "    ";
    if (rows[i].size() == 1) {
      out += json_quote(rows[i][0]);
    } else {
      out += "[";
      for (std::size_t j = 0; j < rows[i].size(); ++j) {
        if (j) out += ", ";
        out += json_quote(rows[i][j]);
      }
      out += "]";
    }
    out += i + 1 < rows.size() ? ",\n" : "\n";
  }
  out += "  ]";
}

}  // namespace kpc::detail
