#pragma once

#include <string>

#include "json.hpp"

namespace msgfield {

// Parses one configuration document into a JSON object. When as_json is
// false the text is read as the key/value table grammar documented in
// docs/cli.md: `#` comments, `[table]` and `[[table array]]` headers one
// level deep, and `key = value` lines with string / boolean / integer /
// float / flat-array values. Throws ParseError with a line number.
nlohmann::json parse_config_text(const std::string& text, bool as_json);

// Reads a config file; `.json` files (or files whose first non-space byte is
// '{') parse as JSON, everything else as the table grammar. Throws IoError
// when unreadable, ParseError on bad syntax.
nlohmann::json load_config_file(const std::string& path);

}  // namespace msgfield
