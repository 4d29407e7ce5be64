#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "tabsense/corpus.hpp"

namespace tabsense {

inline constexpr int kStatDim = 27;

// Optional pre-trained word embeddings: one `token v1 .. vd` line per token,
// space-separated. When present they replace hashed word features.
struct EmbeddingTable {
  int dim = 0;
  std::unordered_map<std::string, std::vector<double>> vectors;

  static EmbeddingTable load(const std::filesystem::path& path);
};

struct FeatureConfig {
  int d_word = 128;
  int d_para = 128;
  uint64_t hash_seed = 42;
  std::string char_alphabet = default_alphabet();
  std::string embedding_path;  // empty = hashed word features
  std::shared_ptr<const EmbeddingTable> embeddings;

  static std::string default_alphabet();  // 43 chars

  int d_char() const { return 2 * static_cast<int>(char_alphabet.size()); }
  int word_dim() const { return embeddings ? embeddings->dim : d_word; }
  int total_dim() const { return d_char() + word_dim() + d_para + kStatDim; }

  void validate() const;      // dims > 0, alphabet non-empty and duplicate-free
  void load_embeddings();     // populates `embeddings` from embedding_path if set
};

struct ColumnFeatures {
  std::vector<double> char_v;
  std::vector<double> word_v;
  std::vector<double> para_v;
  std::vector<double> stat_v;  // always kStatDim entries
};

// 27 statistics in a fixed documented order; see stat_feature_names().
// Degenerate inputs yield 0, never NaN/Inf.
std::vector<double> stat_features(const Column& column);
const std::vector<std::string>& stat_feature_names();

// Per-cell normalized frequency of each alphabet char (cell lowercased,
// frequency = count / cell byte length), aggregated over cells as
// (mean, population std) pairs per char: dim = 2 * |alphabet|.
std::vector<double> char_features(const Column& column, const FeatureConfig& config);

// Hashing trick over lowercased alphanumeric tokens with +-1 sign hashing;
// L2-normalized mean, or the zero vector for a token-free column. With
// embeddings loaded: normalized mean of in-vocabulary token vectors instead.
std::vector<double> word_features(const Column& column, const FeatureConfig& config);

// Hashed bag of within-cell token bigrams and within-token char trigrams,
// L2-normalized. Cell order never matters: all aggregation is bag-style.
std::vector<double> para_features(const Column& column, const FeatureConfig& config);

ColumnFeatures featurize_column(const Column& column, const FeatureConfig& config);

}  // namespace tabsense
