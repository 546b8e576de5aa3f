#pragma once

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace xlit {

// Bad input data or unusable files. CLI maps this to exit code 2.
struct DataError : std::runtime_error {
  explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

// Non-finite values where finite ones are required. CLI maps this to exit 3.
struct NumericError : std::runtime_error {
  NumericError(std::string comp, const std::string& what)
      : std::runtime_error(what), component(std::move(comp)) {}
  std::string component;
};

std::vector<std::string> read_lines(const std::string& path);

// Write via temp file + rename so readers never observe a partial file.
void write_file_atomic(const std::string& path, const std::string& content);

std::string read_file(const std::string& path);

// Flat key=value files ('#' comments allowed). Order preserved.
using KvPairs = std::vector<std::pair<std::string, std::string>>;
KvPairs read_kv_file(const std::string& path);
void write_kv_file(const std::string& path, const KvPairs& kv);
const std::string* kv_find(const KvPairs& kv, const std::string& key);

std::string format_double(double v);  // shortest round-trip decimal

}  // namespace xlit
