#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

#include "ldesign/error.hpp"

namespace ldesign::cli {

/// Minimal TOML subset sufficient for experiment configs: `[table.name]`
/// headers, `key = value` pairs with string / integer / float / boolean /
/// single-line array values, and `#` comments. No inline tables, no
/// multi-line values, no arrays of tables. Parse errors carry file:line.
struct TomlValue {
  enum class Kind { String, Integer, Float, Boolean, Array };
  Kind kind = Kind::String;
  std::string str;
  long long integer = 0;
  double number = 0;  // set for both Integer and Float
  bool boolean = false;
  std::vector<TomlValue> array;
  int line = 0;
};

/// Flat document keyed by dotted paths ("train.steps"). Typed getters mark
/// keys as consumed; `check_all_consumed` rejects anything left over, which
/// is how unknown config keys are reported.
class TomlDoc {
 public:
  static TomlDoc parse_file(const std::string& path);
  static TomlDoc parse_string(const std::string& text,
                              const std::string& source = "<string>");

  /// Apply a `--set key=value` override; the value is parsed with the same
  /// grammar as file values.
  void set_override(const std::string& dotted, const std::string& raw_value);

  bool has(const std::string& key) const { return values_.count(key) != 0; }

  // Required getters: missing key or wrong type -> config error.
  std::string get_string(const std::string& key) const;
  long long get_int(const std::string& key) const;
  double get_double(const std::string& key) const;
  bool get_bool(const std::string& key) const;
  std::vector<double> get_double_array(const std::string& key) const;
  std::vector<long long> get_int_array(const std::string& key) const;
  std::vector<std::string> get_string_array(const std::string& key) const;

  // Optional getters with defaults (key is still marked consumed if present).
  std::string get_string(const std::string& key, const std::string& dflt) const;
  long long get_int(const std::string& key, long long dflt) const;
  double get_double(const std::string& key, double dflt) const;
  bool get_bool(const std::string& key, bool dflt) const;

  /// All keys that start with `prefix` (sorted).
  std::vector<std::string> keys_with_prefix(const std::string& prefix) const;

  /// Throws a config error naming the first unconsumed key and its line.
  void check_all_consumed() const;

  /// Deterministic serialization (sorted keys, full precision), the input to
  /// the config hash.
  std::string canonical() const;

 private:
  const TomlValue& require(const std::string& key) const;
  std::map<std::string, TomlValue> values_;
  mutable std::set<std::string> consumed_;
  std::string source_ = "<string>";
};

/// FNV-1a 64-bit over a string, rendered as 16 hex digits; used as the
/// config hash stamped onto every artifact.
std::string fnv1a_hex(const std::string& text);

}  // namespace ldesign::cli
