#include "msgfield/config.hpp"

#include <cctype>
#include <charconv>
#include <fstream>
#include <sstream>

#include "msgfield/errors.hpp"

namespace msgfield {

namespace {

using nlohmann::json;

std::string trim(const std::string& s) {
  size_t b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  size_t e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

// Removes a trailing comment, honoring quoted strings.
std::string strip_comment(const std::string& line) {
  bool in_string = false;
  for (size_t i = 0; i < line.size(); ++i) {
    char c = line[i];
    if (in_string) {
      if (c == '\\') ++i;
      else if (c == '"') in_string = false;
    } else if (c == '"') {
      in_string = true;
    } else if (c == '#') {
      return line.substr(0, i);
    }
  }
  return line;
}

bool valid_key(const std::string& k) {
  if (k.empty()) return false;
  for (char c : k)
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '_' && c != '-') return false;
  return true;
}

std::string parse_string_value(const std::string& raw, int line_no) {
  if (raw.size() < 2 || raw.back() != '"')
    throw ParseError("unterminated string", line_no);
  std::string out;
  for (size_t i = 1; i + 1 < raw.size(); ++i) {
    char c = raw[i];
    if (c != '\\') {
      out.push_back(c);
      continue;
    }
    if (i + 2 >= raw.size()) throw ParseError("dangling escape in string", line_no);
    char e = raw[++i];
    switch (e) {
      case '"': out.push_back('"'); break;
      case '\\': out.push_back('\\'); break;
      case 'n': out.push_back('\n'); break;
      case 't': out.push_back('\t'); break;
      case 'r': out.push_back('\r'); break;
      default: throw ParseError(std::string("unsupported escape '\\") + e + "'", line_no);
    }
  }
  return out;
}

json parse_scalar(const std::string& raw, int line_no) {
  if (raw.empty()) throw ParseError("missing value", line_no);
  if (raw.front() == '"') return parse_string_value(raw, line_no);
  if (raw == "true") return true;
  if (raw == "false") return false;

  // from_chars rejects an explicit leading '+'.
  const std::string num = raw.front() == '+' ? raw.substr(1) : raw;

  // Integer first (no dot/exponent), then float.
  const bool looks_integral = num.find_first_of(".eEnN") == std::string::npos;
  if (looks_integral) {
    int64_t iv = 0;
    auto [p, ec] = std::from_chars(num.data(), num.data() + num.size(), iv);
    if (ec == std::errc() && p == num.data() + num.size()) return iv;
  }
  double dv = 0;
  auto [p, ec] = std::from_chars(num.data(), num.data() + num.size(), dv);
  if (ec == std::errc() && p == num.data() + num.size()) return dv;
  throw ParseError("cannot parse value '" + raw + "'", line_no);
}

// Splits "a, b, c" at top-level commas (no nested arrays supported).
json parse_value(const std::string& raw, int line_no) {
  if (raw.empty()) throw ParseError("missing value", line_no);
  if (raw.front() != '[') return parse_scalar(raw, line_no);
  if (raw.back() != ']') throw ParseError("unterminated array", line_no);

  json arr = json::array();
  std::string body = trim(raw.substr(1, raw.size() - 2));
  if (body.empty()) return arr;
  std::string item;
  bool in_string = false;
  for (size_t i = 0; i <= body.size(); ++i) {
    const char c = i < body.size() ? body[i] : ',';
    if (in_string) {
      item.push_back(c);
      if (c == '\\' && i + 1 < body.size()) item.push_back(body[++i]);
      else if (c == '"') in_string = false;
    } else if (c == '"') {
      in_string = true;
      item.push_back(c);
    } else if (c == ',' || i == body.size()) {
      const std::string entry = trim(item);
      if (entry.empty()) {
        if (i == body.size()) break;  // trailing comma
        throw ParseError("empty array element", line_no);
      }
      if (entry.front() == '[') throw ParseError("nested arrays are not supported", line_no);
      arr.push_back(parse_scalar(entry, line_no));
      item.clear();
    } else {
      item.push_back(c);
    }
  }
  if (in_string) throw ParseError("unterminated string in array", line_no);
  return arr;
}

json parse_table_text(const std::string& text) {
  json root = json::object();
  json* cur = &root;
  std::istringstream in(text);
  std::string raw;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const std::string line = trim(strip_comment(raw));
    if (line.empty()) continue;

    if (line.front() == '[') {
      const bool array_table = line.rfind("[[", 0) == 0;
      const std::string closer = array_table ? "]]" : "]";
      if (line.size() < 2 * closer.size() + 1 ||
          line.substr(line.size() - closer.size()) != closer)
        throw ParseError("malformed table header '" + line + "'", line_no);
      const std::string name =
          trim(line.substr(closer.size(), line.size() - 2 * closer.size()));
      if (!valid_key(name)) throw ParseError("bad table name '" + name + "'", line_no);
      if (array_table) {
        if (root.contains(name) && !root[name].is_array())
          throw ParseError("'" + name + "' is already a non-array table", line_no);
        root[name].push_back(json::object());
        cur = &root[name].back();
      } else {
        if (root.contains(name)) throw ParseError("duplicate table '" + name + "'", line_no);
        root[name] = json::object();
        cur = &root[name];
      }
      continue;
    }

    const size_t eq = line.find('=');
    if (eq == std::string::npos) throw ParseError("expected 'key = value'", line_no);
    const std::string key = trim(line.substr(0, eq));
    if (!valid_key(key)) throw ParseError("bad key '" + key + "'", line_no);
    if (cur->contains(key)) throw ParseError("duplicate key '" + key + "'", line_no);
    (*cur)[key] = parse_value(trim(line.substr(eq + 1)), line_no);
  }
  return root;
}

}  // namespace

nlohmann::json parse_config_text(const std::string& text, bool as_json) {
  if (!as_json) return parse_table_text(text);
  try {
    json j = json::parse(text);
    if (!j.is_object()) throw ParseError("config root must be a JSON object");
    return j;
  } catch (const json::exception& e) {
    throw ParseError(std::string("bad JSON config: ") + e.what());
  }
}

nlohmann::json load_config_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open config file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  const std::string text = buf.str();

  bool as_json = path.size() >= 5 && path.substr(path.size() - 5) == ".json";
  if (!as_json) {
    const size_t first = text.find_first_not_of(" \t\r\n");
    as_json = first != std::string::npos && text[first] == '{';
  }
  return parse_config_text(text, as_json);
}

}  // namespace msgfield
