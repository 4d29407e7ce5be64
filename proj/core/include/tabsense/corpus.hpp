#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace tabsense {

using TypeId = int32_t;

struct Column {
  std::string header_raw;
  std::vector<std::string> cells;
  std::optional<TypeId> label;
};

struct Table {
  std::string id;
  std::vector<Column> columns;
  std::string provenance;  // source path; empty when synthetic
};

struct TypeVocabulary {
  std::vector<std::string> names;            // TypeId -> canonical name
  std::map<std::string, TypeId> index;       // exact inverse of names

  static TypeVocabulary from_names(std::vector<std::string> names);
  size_t size() const { return names.size(); }
  std::optional<TypeId> find(std::string_view canonical) const;
  const std::string& name(TypeId t) const { return names.at(static_cast<size_t>(t)); }
};

struct CooccurrenceMatrix {
  size_t type_count = 0;
  std::vector<int64_t> counts;  // row-major square, symmetric

  explicit CooccurrenceMatrix(size_t n = 0) : type_count(n), counts(n * n, 0) {}
  int64_t at(size_t i, size_t j) const { return counts[i * type_count + j]; }
  int64_t& at(size_t i, size_t j) { return counts[i * type_count + j]; }
};

struct SkipRecord {
  std::string path;
  std::string reason;
};

struct LoadResult {
  std::vector<Table> tables;
  std::vector<SkipRecord> skipped;
};

// Deletes parenthesized segments, splits on whitespace and on camel-case
// boundaries, then rejoins as lowerCamelCase. Idempotent; "" means no usable
// label. Tokens with no lowercase letters (acronyms) keep their case so
// re-application cannot change them.
std::string canonicalize_header(std::string_view raw);

// `path` is either a directory scanned recursively for *.csv (lexicographic
// order) or a manifest file listing one CSV path per line, with `#` comments.
// Malformed or degenerate files become SkipRecords instead of failures.
// Relative manifest entries resolve against the manifest's directory.
LoadResult load_corpus(const std::filesystem::path& path);

// Canonical labels backed by at least min_support columns, ordered by
// descending column frequency, ties broken lexicographically.
TypeVocabulary build_vocabulary(const std::vector<Table>& tables, int min_support);

// Stamps column labels from canonicalized headers; clears labels whose
// canonical form is outside the vocabulary.
void label_tables(std::vector<Table>& tables, const TypeVocabulary& vocab);

std::vector<Table> filter_multicolumn(const std::vector<Table>& tables);

CooccurrenceMatrix cooccurrence(const std::vector<Table>& tables, const TypeVocabulary& vocab);

struct FoldSplit {
  std::vector<size_t> train;  // table indices
  std::vector<size_t> test;
};

std::vector<FoldSplit> split_folds(size_t table_count, int k, uint64_t seed);

void write_vocabulary(const std::filesystem::path& path, const TypeVocabulary& vocab);
TypeVocabulary read_vocabulary(const std::filesystem::path& path);

// Fold file: lines of `<fold_index>\t<table_id>` recording test-fold
// membership; train side of fold f is every other table.
void write_folds(const std::filesystem::path& path, const std::vector<FoldSplit>& folds,
                 const std::vector<Table>& tables);
std::vector<FoldSplit> read_folds(const std::filesystem::path& path, const std::vector<Table>& tables);

}  // namespace tabsense
