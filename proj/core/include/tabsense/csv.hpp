#pragma once

#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace tabsense {

struct CsvError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// RFC-4180 parser. Records split on CRLF or LF; fields on ','; quoted fields
// may contain delimiters, newlines, and "" escapes. Lenient extensions:
// a stray quote inside an unquoted field is literal, text after a closing
// quote is appended literally, blank lines are skipped, and a UTF-8 BOM at
// the start is dropped. An unterminated quote is malformed input.
std::vector<std::vector<std::string>> parse_csv(std::string_view text);

}  // namespace tabsense
