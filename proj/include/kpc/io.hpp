#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace kpc {

// Whole-file helpers. Both throw kpc::Error with the path in the message.
std::string read_file(const std::filesystem::path& path);
// Creates parent directories as needed; writes bytes verbatim.
void write_file(const std::filesystem::path& path, std::string_view contents);

// Lowercase hex SHA-256 of `data`.
std::string sha256_hex(std::string_view data);

}  // namespace kpc
