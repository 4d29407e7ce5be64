#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "tabsense/corpus.hpp"
#include "tabsense/featurizer.hpp"
#include "tabsense/mat.hpp"
#include "tabsense/neural.hpp"
#include "tabsense/topics.hpp"

namespace tabsense {

// Linear-chain CRF over a table's columns. Unaries are an m x |T| matrix of
// log-domain scores (one row per column); the pairwise matrix P is |T| x |T|,
// where edge (i, i+1) contributes P[t_i][t_{i+1}]. All inference is exact and
// runs in log-space.

struct CrfTrainMeta {
  int epochs = 0;
  double learning_rate = 0.0;
  int batch_tables = 0;
  uint64_t seed = 0;
};

struct CrfModel {
  Mat pairwise;  // |T| x |T|
  int type_count = 0;
  CrfTrainMeta meta;
};

// Log-softmax rows of the classifier's eval-mode outputs, one per column.
Mat unaries_from_classifier(const ClassifierModel& model,
                            const std::vector<ColumnFeatures>& columns, const TopicVector* topic);

// Gold label sequence of a table; throws if any column is unlabeled.
std::vector<TypeId> gold_sequence(const Table& table);

double log_partition(const Mat& unaries, const Mat& pairwise);

// Highest-scoring sequence; ties broken toward the lowest type index at each
// backtrack step (equivalently: among maximizers, the sequence whose reversed
// tuple (t_{m-1}, ..., t_0) is lexicographically smallest).
std::vector<TypeId> map_decode(const Mat& unaries, const Mat& pairwise);

struct Marginals {
  Mat node;               // m x |T|, rows sum to 1
  std::vector<Mat> edge;  // m-1 tables, each |T| x |T| summing to 1
};
Marginals marginals(const Mat& unaries, const Mat& pairwise);

struct CrfBatchItem {
  const Mat* unaries = nullptr;
  std::vector<TypeId> gold;  // one label per column
};

// Mean negative log-likelihood over the batch and its gradient wrt P:
// dNLL/dP[a][b] = mean over tables of sum over adjacent positions of
// (edge marginal[a][b] - indicator(gold pair == (a,b))).
std::pair<double, Mat> nll_and_gradient(const std::vector<CrfBatchItem>& batch, const Mat& pairwise);

// P[i][j] = scale * log(1 + counts[i][j]).
Mat init_pairwise_from_cooccurrence(const CooccurrenceMatrix& counts, double scale);

struct CrfTrainConfig {
  int epochs = 15;
  double learning_rate = 1e-2;
  int batch_tables = 10;
  uint64_t seed = 0;
};

struct CrfTrainResult {
  std::vector<double> epoch_nll;  // mean over all training tables
};

// Adam on P with the unary scorer frozen; deterministic under seed.
CrfTrainResult train_crf(CrfModel& model, const std::vector<CrfBatchItem>& corpus,
                         const CrfTrainConfig& config);

// Exhaustive oracles; reject instances with |T|^m > 10^6.
std::vector<TypeId> brute_force_decode(const Mat& unaries, const Mat& pairwise);
double brute_force_partition(const Mat& unaries, const Mat& pairwise);

}  // namespace tabsense
