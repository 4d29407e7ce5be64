#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "tabsense/corpus.hpp"
#include "tabsense/mat.hpp"
#include "tabsense/rng.hpp"

namespace tabsense {

struct LdaModel {
  int K = 0;
  double alpha = 0.0;
  double beta = 0.0;
  std::vector<std::string> vocab_tokens;          // token id -> token
  std::unordered_map<std::string, int> vocab;     // token -> id
  Mat topic_word;                                 // K x V, rows sum to 1, entries > 0
  uint32_t train_iters = 0;
  uint64_t seed = 0;

  size_t vocab_size() const { return vocab_tokens.size(); }
};

struct TopicVector {
  std::vector<double> theta;  // simplex: entries >= 0, sum 1
};

struct LdaTrainConfig {
  int K = 20;
  double alpha = 0.0;  // <= 0 means the 50/K default
  double beta = 0.01;
  int iters = 200;
  uint64_t seed = 0;
  size_t vocab_cap = 50000;  // top tokens by frequency

  double effective_alpha() const { return alpha > 0 ? alpha : 50.0 / static_cast<double>(K); }
};

// All cells of all columns in column-major order, lowercased and
// whitespace-tokenized. Headers never contribute.
std::vector<std::string> table_to_document(const Table& table);

// Collapsed Gibbs sampler over id-encoded documents. Exposed so tests can
// drive sweeps one at a time and check count conservation.
class GibbsLda {
 public:
  GibbsLda(std::vector<std::vector<int>> docs, int vocab_size, int K, double alpha, double beta,
           uint64_t seed);

  void sweep();

  const Mat& doc_topic_counts() const { return n_dk_; }
  const Mat& topic_word_counts() const { return n_kw_; }
  const std::vector<double>& topic_totals() const { return n_k_; }
  size_t token_count() const { return total_tokens_; }

  // Smoothed topic_word rows from the current counts.
  Mat estimate_topic_word() const;

 private:
  void sample_token(size_t d, size_t i);

  std::vector<std::vector<int>> docs_;
  std::vector<std::vector<int>> z_;
  Mat n_dk_;                    // D x K
  Mat n_kw_;                    // K x V
  std::vector<double> n_k_;     // K
  size_t total_tokens_ = 0;
  int K_;
  int V_;
  double alpha_;
  double beta_;
  Rng rng_;
  std::vector<double> weights_;
};

LdaModel train_lda(const std::vector<std::vector<std::string>>& docs, const LdaTrainConfig& config);

// Gibbs inference with topic_word held fixed; theta is the mean of smoothed
// document-topic proportions over post-burn-in sweeps. Out-of-vocabulary
// tokens are dropped; an all-OOV document yields the uniform vector.
TopicVector infer_topics(const LdaModel& model, const std::vector<std::string>& doc, int iters,
                         int burnin, uint64_t seed);

double held_out_log_likelihood(const LdaModel& model, const std::vector<std::vector<std::string>>& docs,
                               int infer_iters, int infer_burnin, uint64_t seed);

// Mean theta over the tables containing each type; types backed by no table
// get an all-zero row.
Mat compute_type_topic_means(const std::vector<Table>& tables, const std::vector<TopicVector>& thetas,
                             size_t type_count);

struct TopicSaliency {
  int topic = 0;
  double score = 0.0;
  std::vector<TypeId> top_types;  // descending probability, ties by type id
};

// Per topic: mean probability over the k types most associated with it,
// sorted descending by score (ties by topic id). k is clamped to |types|.
std::vector<TopicSaliency> topic_saliency(const Mat& type_topic_means, int k);

}  // namespace tabsense
