#include "ldesign/cli/toml.hpp"

#include <cctype>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace ldesign::cli {
namespace {

[[noreturn]] void fail(const std::string& source, int line,
                       const std::string& msg) {
  throw Error(ErrorKind::Config,
              source + ":" + std::to_string(line) + ": " + msg);
}

bool valid_key(const std::string& k) {
  if (k.empty()) return false;
  for (char c : k)
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '_' && c != '-' &&
        c != '.')
      return false;
  return k.front() != '.' && k.back() != '.';
}

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

/// Strips a trailing comment, respecting double-quoted strings.
std::string strip_comment(const std::string& s) {
  bool in_str = false;
  for (std::size_t i = 0; i < s.size(); ++i) {
    char c = s[i];
    if (in_str) {
      if (c == '\\') ++i;
      else if (c == '"') in_str = false;
    } else if (c == '"') {
      in_str = true;
    } else if (c == '#') {
      return s.substr(0, i);
    }
  }
  return s;
}

/// Splits an array body on top-level commas (no nested arrays of arrays
/// needed, but strings may contain commas).
std::vector<std::string> split_top_level(const std::string& body,
                                         const std::string& source, int line) {
  std::vector<std::string> parts;
  std::string cur;
  int depth = 0;
  bool in_str = false;
  for (std::size_t i = 0; i < body.size(); ++i) {
    char c = body[i];
    if (in_str) {
      cur += c;
      if (c == '\\' && i + 1 < body.size()) cur += body[++i];
      else if (c == '"') in_str = false;
      continue;
    }
    if (c == '"') in_str = true;
    if (c == '[') ++depth;
    if (c == ']') --depth;
    if (c == ',' && depth == 0) {
      parts.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (in_str || depth != 0) fail(source, line, "unterminated array or string");
  if (!trim(cur).empty() || !parts.empty()) parts.push_back(cur);
  // Allow one trailing comma: drop a final empty part.
  if (!parts.empty() && trim(parts.back()).empty()) parts.pop_back();
  return parts;
}

TomlValue parse_value(const std::string& raw, const std::string& source,
                      int line) {
  std::string v = trim(raw);
  TomlValue out;
  out.line = line;
  if (v.empty()) fail(source, line, "missing value");

  if (v.front() == '"') {
    if (v.size() < 2 || v.back() != '"')
      fail(source, line, "unterminated string");
    out.kind = TomlValue::Kind::String;
    for (std::size_t i = 1; i + 1 < v.size(); ++i) {
      char c = v[i];
      if (c == '\\') {
        if (i + 2 >= v.size() + 1) fail(source, line, "dangling escape");
        char e = v[++i];
        switch (e) {
          case 'n': out.str += '\n'; break;
          case 't': out.str += '\t'; break;
          case '"': out.str += '"'; break;
          case '\\': out.str += '\\'; break;
          default: fail(source, line, std::string("bad escape \\") + e);
        }
      } else if (c == '"') {
        fail(source, line, "unescaped quote inside string");
      } else {
        out.str += c;
      }
    }
    return out;
  }
  if (v == "true" || v == "false") {
    out.kind = TomlValue::Kind::Boolean;
    out.boolean = (v == "true");
    return out;
  }
  if (v.front() == '[') {
    if (v.back() != ']') fail(source, line, "array must close on one line");
    out.kind = TomlValue::Kind::Array;
    for (const std::string& part :
         split_top_level(v.substr(1, v.size() - 2), source, line))
      out.array.push_back(parse_value(part, source, line));
    return out;
  }

  // Number: integer when it parses fully without '.', 'e', 'inf', 'nan'.
  char* end = nullptr;
  bool int_like = v.find_first_of(".eE") == std::string::npos;
  if (int_like) {
    long long i = std::strtoll(v.c_str(), &end, 10);
    if (end && *end == '\0') {
      out.kind = TomlValue::Kind::Integer;
      out.integer = i;
      out.number = static_cast<double>(i);
      return out;
    }
  }
  double d = std::strtod(v.c_str(), &end);
  if (end && *end == '\0' && end != v.c_str()) {
    out.kind = TomlValue::Kind::Float;
    out.number = d;
    return out;
  }
  fail(source, line, "cannot parse value `" + v + "`");
}

const char* kind_name(TomlValue::Kind k) {
  switch (k) {
    case TomlValue::Kind::String: return "string";
    case TomlValue::Kind::Integer: return "integer";
    case TomlValue::Kind::Float: return "float";
    case TomlValue::Kind::Boolean: return "boolean";
    case TomlValue::Kind::Array: return "array";
  }
  return "?";
}

void render(const TomlValue& v, std::string& out) {
  char buf[64];
  switch (v.kind) {
    case TomlValue::Kind::String:
      out += '"';
      out += v.str;
      out += '"';
      break;
    case TomlValue::Kind::Integer:
      std::snprintf(buf, sizeof buf, "%lld", v.integer);
      out += buf;
      break;
    case TomlValue::Kind::Float:
      std::snprintf(buf, sizeof buf, "%.17g", v.number);
      out += buf;
      break;
    case TomlValue::Kind::Boolean:
      out += v.boolean ? "true" : "false";
      break;
    case TomlValue::Kind::Array:
      out += '[';
      for (std::size_t i = 0; i < v.array.size(); ++i) {
        if (i) out += ", ";
        render(v.array[i], out);
      }
      out += ']';
      break;
  }
}

}  // namespace

TomlDoc TomlDoc::parse_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Config, "cannot open config: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_string(ss.str(), path);
}

TomlDoc TomlDoc::parse_string(const std::string& text,
                              const std::string& source) {
  TomlDoc doc;
  doc.source_ = source;
  std::istringstream in(text);
  std::string raw;
  std::string prefix;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    std::string line = trim(strip_comment(raw));
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') fail(source, line_no, "unterminated table header");
      std::string name = trim(line.substr(1, line.size() - 2));
      if (!valid_key(name))
        fail(source, line_no, "bad table name `" + name + "`");
      prefix = name + ".";
      continue;
    }
    std::size_t eq = std::string::npos;
    {
      bool in_str = false;
      for (std::size_t i = 0; i < line.size() && eq == std::string::npos; ++i) {
        char c = line[i];
        if (in_str) {
          if (c == '\\') ++i;
          else if (c == '"') in_str = false;
        } else if (c == '"') in_str = true;
        else if (c == '=') eq = i;
      }
    }
    if (eq == std::string::npos)
      fail(source, line_no, "expected `key = value`");
    std::string key = trim(line.substr(0, eq));
    if (!valid_key(key)) fail(source, line_no, "bad key `" + key + "`");
    std::string full = prefix + key;
    if (doc.values_.count(full))
      fail(source, line_no, "duplicate key `" + full + "`");
    doc.values_[full] = parse_value(line.substr(eq + 1), source, line_no);
  }
  return doc;
}

void TomlDoc::set_override(const std::string& dotted,
                           const std::string& raw_value) {
  if (!valid_key(dotted))
    throw Error(ErrorKind::Config, "--set: bad key `" + dotted + "`");
  values_[dotted] = parse_value(raw_value, "--set " + dotted, 0);
}

const TomlValue& TomlDoc::require(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end())
    throw Error(ErrorKind::Config,
                source_ + ": missing required key `" + key + "`");
  consumed_.insert(key);
  return it->second;
}

std::string TomlDoc::get_string(const std::string& key) const {
  const TomlValue& v = require(key);
  if (v.kind != TomlValue::Kind::String)
    fail(source_, v.line, "`" + key + "` must be a string, got " +
                              kind_name(v.kind));
  return v.str;
}

long long TomlDoc::get_int(const std::string& key) const {
  const TomlValue& v = require(key);
  if (v.kind != TomlValue::Kind::Integer)
    fail(source_, v.line,
         "`" + key + "` must be an integer, got " + kind_name(v.kind));
  return v.integer;
}

double TomlDoc::get_double(const std::string& key) const {
  const TomlValue& v = require(key);
  if (v.kind != TomlValue::Kind::Integer && v.kind != TomlValue::Kind::Float)
    fail(source_, v.line,
         "`" + key + "` must be a number, got " + kind_name(v.kind));
  return v.number;
}

bool TomlDoc::get_bool(const std::string& key) const {
  const TomlValue& v = require(key);
  if (v.kind != TomlValue::Kind::Boolean)
    fail(source_, v.line,
         "`" + key + "` must be a boolean, got " + kind_name(v.kind));
  return v.boolean;
}

std::vector<double> TomlDoc::get_double_array(const std::string& key) const {
  const TomlValue& v = require(key);
  if (v.kind != TomlValue::Kind::Array)
    fail(source_, v.line, "`" + key + "` must be an array");
  std::vector<double> out;
  for (const TomlValue& e : v.array) {
    if (e.kind != TomlValue::Kind::Integer && e.kind != TomlValue::Kind::Float)
      fail(source_, v.line, "`" + key + "` must contain only numbers");
    out.push_back(e.number);
  }
  return out;
}

std::vector<long long> TomlDoc::get_int_array(const std::string& key) const {
  const TomlValue& v = require(key);
  if (v.kind != TomlValue::Kind::Array)
    fail(source_, v.line, "`" + key + "` must be an array");
  std::vector<long long> out;
  for (const TomlValue& e : v.array) {
    if (e.kind != TomlValue::Kind::Integer)
      fail(source_, v.line, "`" + key + "` must contain only integers");
    out.push_back(e.integer);
  }
  return out;
}

std::vector<std::string> TomlDoc::get_string_array(
    const std::string& key) const {
  const TomlValue& v = require(key);
  if (v.kind != TomlValue::Kind::Array)
    fail(source_, v.line, "`" + key + "` must be an array");
  std::vector<std::string> out;
  for (const TomlValue& e : v.array) {
    if (e.kind != TomlValue::Kind::String)
      fail(source_, v.line, "`" + key + "` must contain only strings");
    out.push_back(e.str);
  }
  return out;
}

std::string TomlDoc::get_string(const std::string& key,
                                const std::string& dflt) const {
  return has(key) ? get_string(key) : dflt;
}
long long TomlDoc::get_int(const std::string& key, long long dflt) const {
  return has(key) ? get_int(key) : dflt;
}
double TomlDoc::get_double(const std::string& key, double dflt) const {
  return has(key) ? get_double(key) : dflt;
}
bool TomlDoc::get_bool(const std::string& key, bool dflt) const {
  return has(key) ? get_bool(key) : dflt;
}

std::vector<std::string> TomlDoc::keys_with_prefix(
    const std::string& prefix) const {
  std::vector<std::string> out;
  for (auto it = values_.lower_bound(prefix); it != values_.end(); ++it) {
    if (it->first.compare(0, prefix.size(), prefix) != 0) break;
    out.push_back(it->first);
  }
  return out;
}

void TomlDoc::check_all_consumed() const {
  for (const auto& [key, value] : values_)
    if (!consumed_.count(key))
      fail(source_, value.line, "unknown key `" + key + "`");
}

std::string TomlDoc::canonical() const {
  std::string out;
  for (const auto& [key, value] : values_) {
    out += key;
    out += " = ";
    render(value, out);
    out += '\n';
  }
  return out;
}

std::string fnv1a_hex(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (char c : text) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace ldesign::cli
