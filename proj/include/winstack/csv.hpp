#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace winstack {

// Minimal delimited-text support for the toolkit's file formats: comma
// separated, header row required, UTF-8, no quoting (fields must not
// contain commas or newlines).
struct CsvTable {
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;

  /// Index of a named column; throws if the header lacks it.
  std::size_t column(const std::string& name) const;
};

CsvTable read_csv(const std::filesystem::path& path);

/// Writes content to a temp file in the same directory and renames it over
/// the target, so concurrent readers never observe a partial file.
void write_text_file_atomic(const std::filesystem::path& path, const std::string& content);

std::string csv_join(const std::vector<std::string>& fields);

/// Round-trippable decimal form of a double (%.17g).
std::string format_double(double v);

/// Bit-exact hexadecimal form of a double (%a); model files use this.
std::string format_double_hex(double v);

double parse_double(const std::string& s, const std::string& context);
long long parse_int(const std::string& s, const std::string& context);

}  // namespace winstack
