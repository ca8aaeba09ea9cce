// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace entrgi {

/// Shortest decimal string that round-trips the exact double value.
std::string format_double(double value);

std::string format_u64(std::uint64_t value);

/// FNV-1a 64-bit digest; used to fingerprint snapshot content.
std::uint64_t fnv1a64(std::span<const char> bytes);
std::uint64_t fnv1a64(const std::string& text);

/// Flat key-value text format: one `key = value` per line, `#` comments and
/// blank lines ignored. Later duplicates override earlier ones.
class KeyValueFile {
 public:
  static KeyValueFile parse(std::istream& in);
  static KeyValueFile parse_string(const std::string& text);

  void set(const std::string& key, const std::string& value);
  bool has(const std::string& key) const;
  std::optional<std::string> get(const std::string& key) const;

  std::string get_string(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  long long get_int(const std::string& key, long long fallback) const;
  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;

  /// Comma-separated list value, trimmed per element; empty value -> empty.
  std::vector<std::string> get_list(const std::string& key) const;

  void write(std::ostream& out) const;
  const std::map<std::string, std::string>& entries() const { return entries_; }

 private:
  std::map<std::string, std::string> entries_;
};

std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& content);

}  // namespace entrgi
