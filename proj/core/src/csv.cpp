#include "tabsense/csv.hpp"

namespace tabsense {

std::vector<std::vector<std::string>> parse_csv(std::string_view text) {
  if (text.starts_with("\xef\xbb\xbf")) text.remove_prefix(3);

  std::vector<std::vector<std::string>> records;
  std::vector<std::string> row;
  std::string field;
  bool in_quotes = false;
  bool row_started = false;  // distinguishes "" from a file of blank lines
  bool row_quoted = false;   // a quoted empty field is a real record, not a blank line

  auto end_field = [&] {
    row.push_back(std::move(field));
    field.clear();
  };
  auto end_row = [&] {
    end_field();
    // A lone empty unquoted field is a blank line; skip it rather than
    // emitting a one-cell record that would poison the ragged-table policy.
    if (row.size() != 1 || !row[0].empty() || row_quoted) records.push_back(std::move(row));
    row.clear();
    row_started = false;
    row_quoted = false;
  };

  for (size_t i = 0; i < text.size(); ++i) {
    char c = text[i];
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          in_quotes = false;
        }
      } else {
        field.push_back(c);
      }
      continue;
    }
    switch (c) {
      case '"':
        if (field.empty()) {
          in_quotes = true;
          row_started = true;
          row_quoted = true;
        } else {
          field.push_back(c);  // lenient: interior quote is literal
        }
        break;
      case ',':
        end_field();
        row_started = true;
        break;
      case '\r':
        if (i + 1 < text.size() && text[i + 1] == '\n') ++i;
        end_row();
        break;
      case '\n':
        end_row();
        break;
      default:
        field.push_back(c);
        row_started = true;
        break;
    }
  }
  if (in_quotes) throw CsvError("unterminated quoted field");
  if (row_started || !row.empty() || !field.empty()) end_row();
  return records;
}

}  // namespace tabsense
