#include "tabsense/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

#include "tabsense/csv.hpp"
#include "tabsense/rng.hpp"

namespace tabsense {

namespace {

bool ascii_space(unsigned char c) { return std::isspace(c) != 0; }
bool ascii_upper(unsigned char c) { return c >= 'A' && c <= 'Z'; }
bool ascii_lower(unsigned char c) { return c >= 'a' && c <= 'z'; }

std::string trim(std::string_view s) {
  size_t b = 0, e = s.size();
  while (b < e && ascii_space(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && ascii_space(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

std::string lower_ascii(std::string_view s) {
  std::string out(s);
  for (char& c : out)
    if (ascii_upper(static_cast<unsigned char>(c))) c = static_cast<char>(c - 'A' + 'a');
  return out;
}

// One canonicalization pass: drop parenthesized segments, split on whitespace
// and camel-case boundaries, rejoin as lowerCamelCase. Tokens without any
// lowercase letter (acronyms, digit runs) are kept verbatim past the first
// position so that a second pass cannot disturb them.
std::string canonicalize_pass(std::string_view raw) {
  std::string stripped;
  int depth = 0;
  for (char c : raw) {
    if (c == '(') {
      ++depth;
    } else if (c == ')') {
      if (depth > 0) --depth;
    } else if (depth == 0) {
      stripped.push_back(c);
    }
  }

  std::vector<std::string> tokens;
  std::string cur;
  auto flush = [&] {
    if (!cur.empty()) tokens.push_back(std::move(cur));
    cur.clear();
  };
  for (size_t i = 0; i < stripped.size(); ++i) {
    unsigned char c = static_cast<unsigned char>(stripped[i]);
    if (ascii_space(c)) {
      flush();
      continue;
    }
    if (ascii_upper(c) && !cur.empty()) {
      unsigned char prev = static_cast<unsigned char>(cur.back());
      unsigned char next = i + 1 < stripped.size() ? static_cast<unsigned char>(stripped[i + 1]) : 0;
      // Split aB -> a|B and ABc -> A|Bc; an unbroken uppercase run stays whole.
      if (!ascii_upper(prev) || (next != 0 && ascii_lower(next))) flush();
    }
    cur.push_back(static_cast<char>(c));
  }
  flush();

  std::string out;
  for (size_t t = 0; t < tokens.size(); ++t) {
    std::string& tok = tokens[t];
    if (t == 0) {
      out += lower_ascii(tok);
      continue;
    }
    bool has_lower = std::any_of(tok.begin(), tok.end(),
                                 [](char c) { return ascii_lower(static_cast<unsigned char>(c)); });
    if (!has_lower) {
      out += tok;
      continue;
    }
    std::string cap = lower_ascii(tok);
    if (ascii_lower(static_cast<unsigned char>(cap[0])))
      cap[0] = static_cast<char>(cap[0] - 'a' + 'A');
    out += cap;
  }
  return out;
}

}  // namespace

std::string canonicalize_header(std::string_view raw) {
  std::string cur(raw);
  for (int i = 0; i < 8; ++i) {
    std::string next = canonicalize_pass(cur);
    if (next == cur) break;
    cur = std::move(next);
  }
  return cur;
}

TypeVocabulary TypeVocabulary::from_names(std::vector<std::string> names) {
  TypeVocabulary v;
  v.names = std::move(names);
  for (size_t i = 0; i < v.names.size(); ++i) {
    const std::string& n = v.names[i];
    if (n.empty()) throw std::invalid_argument("vocabulary contains an empty label");
    if (canonicalize_header(n) != n)
      throw std::invalid_argument("vocabulary label not in canonical form: " + n);
    auto [it, inserted] = v.index.emplace(n, static_cast<TypeId>(i));
    if (!inserted) throw std::invalid_argument("duplicate vocabulary label: " + n);
  }
  return v;
}

std::optional<TypeId> TypeVocabulary::find(std::string_view canonical) const {
  auto it = index.find(std::string(canonical));
  if (it == index.end()) return std::nullopt;
  return it->second;
}

namespace {

std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open file: " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return std::move(ss).str();
}

// One CSV file becomes one table: first record is the header row, column j
// collects cell j of each data row, and ragged input is truncated to the
// shortest column so no fabricated cells enter the corpus.
std::optional<Table> table_from_csv(const std::string& id, const std::filesystem::path& file,
                                    std::string* why) {
  std::string text;
  try {
    text = read_file(file);
  } catch (const std::exception& e) {
    *why = e.what();
    return std::nullopt;
  }
  std::vector<std::vector<std::string>> records;
  try {
    records = parse_csv(text);
  } catch (const CsvError& e) {
    *why = e.what();
    return std::nullopt;
  }
  if (records.empty()) {
    *why = "empty file";
    return std::nullopt;
  }
  const std::vector<std::string>& header = records[0];
  if (records.size() < 2) {
    *why = "no data rows";
    return std::nullopt;
  }

  Table t;
  t.id = id;
  t.provenance = file.generic_string();
  t.columns.resize(header.size());
  for (size_t j = 0; j < header.size(); ++j) t.columns[j].header_raw = trim(header[j]);

  for (size_t r = 1; r < records.size(); ++r) {
    const auto& row = records[r];
    for (size_t j = 0; j < header.size() && j < row.size(); ++j)
      t.columns[j].cells.push_back(trim(row[j]));
  }

  size_t min_len = SIZE_MAX;
  for (const Column& c : t.columns) min_len = std::min(min_len, c.cells.size());
  if (min_len == 0) {
    *why = "ragged rows leave an empty column";
    return std::nullopt;
  }
  for (Column& c : t.columns) c.cells.resize(min_len);
  return t;
}

}  // namespace

LoadResult load_corpus(const std::filesystem::path& path) {
  namespace fs = std::filesystem;
  if (!fs::exists(path)) throw std::runtime_error("corpus path does not exist: " + path.string());

  // (id, file) pairs in deterministic order.
  std::vector<std::pair<std::string, fs::path>> entries;
  if (fs::is_directory(path)) {
    for (const auto& de : fs::recursive_directory_iterator(path)) {
      if (!de.is_regular_file()) continue;
      std::string ext = lower_ascii(de.path().extension().string());
      if (ext != ".csv") continue;
      entries.emplace_back(fs::relative(de.path(), path).generic_string(), de.path());
    }
    std::sort(entries.begin(), entries.end());
  } else {
    std::string text = read_file(path);
    std::istringstream lines(text);
    std::string line;
    while (std::getline(lines, line)) {
      std::string entry = trim(line);
      if (entry.empty() || entry[0] == '#') continue;
      fs::path p(entry);
      if (p.is_relative()) p = path.parent_path() / p;
      entries.emplace_back(entry, p);
    }
  }

  LoadResult result;
  std::set<std::string> seen_ids;
  for (const auto& [id, file] : entries) {
    if (!seen_ids.insert(id).second) {
      result.skipped.push_back({id, "duplicate table id"});
      continue;
    }
    std::string why;
    std::optional<Table> t = table_from_csv(id, file, &why);
    if (t)
      result.tables.push_back(std::move(*t));
    else
      result.skipped.push_back({id, why});
  }
  return result;
}

TypeVocabulary build_vocabulary(const std::vector<Table>& tables, int min_support) {
  if (min_support < 1) throw std::invalid_argument("min_support must be >= 1");
  std::map<std::string, int64_t> freq;
  for (const Table& t : tables)
    for (const Column& c : t.columns) {
      std::string canon = canonicalize_header(c.header_raw);
      if (!canon.empty()) ++freq[canon];
    }

  std::vector<std::pair<std::string, int64_t>> kept;
  for (auto& [name, n] : freq)
    if (n >= min_support) kept.emplace_back(name, n);
  if (kept.empty())
    throw std::runtime_error("no label reaches min_support; cannot build a type vocabulary");

  std::sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });

  std::vector<std::string> names;
  names.reserve(kept.size());
  for (auto& [name, n] : kept) names.push_back(name);
  return TypeVocabulary::from_names(std::move(names));
}

void label_tables(std::vector<Table>& tables, const TypeVocabulary& vocab) {
  for (Table& t : tables)
    for (Column& c : t.columns) c.label = vocab.find(canonicalize_header(c.header_raw));
}

std::vector<Table> filter_multicolumn(const std::vector<Table>& tables) {
  std::vector<Table> out;
  for (const Table& t : tables) {
    size_t labeled = 0;
    for (const Column& c : t.columns) labeled += c.label.has_value();
    if (labeled >= 2) out.push_back(t);
  }
  return out;
}

CooccurrenceMatrix cooccurrence(const std::vector<Table>& tables, const TypeVocabulary& vocab) {
  CooccurrenceMatrix m(vocab.size());
  for (const Table& t : tables) {
    std::map<TypeId, int> present;
    for (const Column& c : t.columns)
      if (c.label) ++present[*c.label];
    for (auto it = present.begin(); it != present.end(); ++it) {
      if (it->second >= 2) ++m.at(static_cast<size_t>(it->first), static_cast<size_t>(it->first));
      for (auto jt = std::next(it); jt != present.end(); ++jt) {
        ++m.at(static_cast<size_t>(it->first), static_cast<size_t>(jt->first));
        ++m.at(static_cast<size_t>(jt->first), static_cast<size_t>(it->first));
      }
    }
  }
  return m;
}

std::vector<FoldSplit> split_folds(size_t table_count, int k, uint64_t seed) {
  if (k < 2) throw std::invalid_argument("fold count must be >= 2");
  if (table_count < static_cast<size_t>(k))
    throw std::invalid_argument("fewer tables than folds");

  std::vector<size_t> order(table_count);
  for (size_t i = 0; i < table_count; ++i) order[i] = i;
  Rng rng(seed);
  rng.shuffle(order);

  std::vector<FoldSplit> folds(static_cast<size_t>(k));
  size_t base = table_count / static_cast<size_t>(k);
  size_t extra = table_count % static_cast<size_t>(k);
  size_t pos = 0;
  for (size_t f = 0; f < folds.size(); ++f) {
    size_t len = base + (f < extra ? 1 : 0);
    folds[f].test.assign(order.begin() + pos, order.begin() + pos + len);
    pos += len;
  }
  for (size_t f = 0; f < folds.size(); ++f) {
    std::sort(folds[f].test.begin(), folds[f].test.end());
    for (size_t g = 0; g < folds.size(); ++g)
      if (g != f)
        folds[f].train.insert(folds[f].train.end(), folds[g].test.begin(), folds[g].test.end());
    std::sort(folds[f].train.begin(), folds[f].train.end());
  }
  return folds;
}

void write_vocabulary(const std::filesystem::path& path, const TypeVocabulary& vocab) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write vocabulary file: " + path.string());
  for (const std::string& n : vocab.names) out << n << '\n';
}

TypeVocabulary read_vocabulary(const std::filesystem::path& path) {
  std::string text = read_file(path);
  std::vector<std::string> names;
  std::istringstream lines(text);
  std::string line;
  while (std::getline(lines, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) throw std::runtime_error("vocabulary file has an empty line: " + path.string());
    names.push_back(line);
  }
  if (names.empty()) throw std::runtime_error("vocabulary file is empty: " + path.string());
  return TypeVocabulary::from_names(std::move(names));
}

void write_folds(const std::filesystem::path& path, const std::vector<FoldSplit>& folds,
                 const std::vector<Table>& tables) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write fold file: " + path.string());
  for (size_t f = 0; f < folds.size(); ++f)
    for (size_t idx : folds[f].test) out << f << '\t' << tables.at(idx).id << '\n';
}

std::vector<FoldSplit> read_folds(const std::filesystem::path& path, const std::vector<Table>& tables) {
  std::map<std::string, size_t> by_id;
  for (size_t i = 0; i < tables.size(); ++i) {
    if (!by_id.emplace(tables[i].id, i).second)
      throw std::runtime_error("duplicate table id in corpus: " + tables[i].id);
  }

  std::string text = read_file(path);
  std::istringstream lines(text);
  std::string line;
  std::vector<std::vector<size_t>> tests;
  std::vector<bool> assigned(tables.size(), false);
  size_t line_no = 0;
  while (std::getline(lines, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    size_t tab = line.find('\t');
    if (tab == std::string::npos)
      throw std::runtime_error("fold file line " + std::to_string(line_no) + " has no tab separator");
    size_t fold = 0;
    try {
      fold = std::stoul(line.substr(0, tab));
    } catch (const std::exception&) {
      throw std::runtime_error("fold file line " + std::to_string(line_no) + " has a bad fold index");
    }
    std::string id = line.substr(tab + 1);
    auto it = by_id.find(id);
    if (it == by_id.end())
      throw std::runtime_error("fold file names a table absent from the corpus: " + id);
    if (assigned[it->second])
      throw std::runtime_error("fold file assigns table twice: " + id);
    assigned[it->second] = true;
    if (tests.size() <= fold) tests.resize(fold + 1);
    tests[fold].push_back(it->second);
  }
  for (size_t i = 0; i < tables.size(); ++i)
    if (!assigned[i])
      throw std::runtime_error("fold file does not cover table: " + tables[i].id);
  if (tests.size() < 2) throw std::runtime_error("fold file must define at least 2 folds");

  std::vector<FoldSplit> folds(tests.size());
  for (size_t f = 0; f < tests.size(); ++f) {
    folds[f].test = tests[f];
    std::sort(folds[f].test.begin(), folds[f].test.end());
    for (size_t g = 0; g < tests.size(); ++g)
      if (g != f) folds[f].train.insert(folds[f].train.end(), tests[g].begin(), tests[g].end());
    std::sort(folds[f].train.begin(), folds[f].train.end());
  }
  return folds;
}

}  // namespace tabsense
