#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "tabsense/bundle.hpp"
#include "tabsense/config.hpp"
#include "tabsense/corpus.hpp"
#include "tabsense/crf.hpp"
#include "tabsense/eval.hpp"

namespace tabsense {

// base:     per-column classifier, no topic input, no structured layer
// nostruct: topic-aware classifier, columns decoded independently
// notopic:  base classifier unaries + structured layer
// full:     topic-aware classifier unaries + structured layer
enum class PredictMode { kBase, kNoStruct, kNoTopic, kFull };

PredictMode parse_predict_mode(std::string_view name);
std::string_view predict_mode_name(PredictMode mode);

// Hash over every id, header, label and cell, rendered as 16 hex digits.
// Stored in trained bundles so a model can be tied back to its corpus.
std::string corpus_fingerprint(const std::vector<Table>& tables);

struct TrainOptions {
  bool with_lda = true;
  bool with_classifier = true;
  bool with_crf = true;
  uint64_t seed = 0;
  // Topic-model training corpus override (e.g. a larger unlabeled crawl);
  // null means the labeled training tables.
  const std::vector<Table>* lda_tables = nullptr;
};

// Full training pass: topic model, then both classifiers (base always, topic
// variant when a topic model exists), then the structured layer on the best
// available unaries. Deterministic: same tables + config + seed reproduce
// the bundle byte for byte.
ModelBundle train_bundle(const std::vector<Table>& tables, const TypeVocabulary& vocabulary,
                         const PipelineConfig& config, const TrainOptions& options);

// Structured layer trained on the base classifier's unaries. The bundled one
// is trained on topic unaries whenever a topic classifier exists, so ablation
// uses this to keep the no-topic variant's unary calibration matched.
CrfModel train_base_crf(const ModelBundle& bundle, const std::vector<Table>& train_tables,
                        uint64_t seed);

struct ColumnPrediction {
  int column_index = 0;
  TypeId type = 0;
  // Softmax probability of the predicted type; under a structured mode, the
  // decoded type's node marginal.
  double confidence = 0.0;
};

// `seed` fixes per-table topic inference; ties in the argmax go to the
// lowest type index. `crf_override` substitutes the structured layer.
std::vector<ColumnPrediction> predict_table(const ModelBundle& bundle, const Table& table,
                                            PredictMode mode, uint64_t seed,
                                            const CrfModel* crf_override = nullptr);

// One record per labeled column; unlabeled columns are predicted but not
// recorded.
std::vector<PredictionRecord> evaluate_records(const ModelBundle& bundle,
                                               const std::vector<Table>& tables, PredictMode mode,
                                               uint64_t seed,
                                               const CrfModel* crf_override = nullptr);

struct AblationVariant {
  PredictMode mode = PredictMode::kBase;
  std::vector<PredictionRecord> records;  // pooled over folds
  MetricReport report;                    // from the pooled records
  std::vector<double> fold_weighted_f1;
  CiStat weighted_f1;                     // mean and 95% half-width over folds
};

struct AblationResult {
  std::vector<AblationVariant> variants;  // order: base, nostruct, notopic, full
  std::vector<FoldSplit> folds;
};

// Cross-validated comparison of all four modes with a fixed vocabulary.
// Each fold trains one stack (shared topic model and classifiers, one
// structured layer per unary source) and evaluates every variant on the
// held-out tables.
AblationResult run_ablation(const std::vector<Table>& tables, const TypeVocabulary& vocabulary,
                            const PipelineConfig& config, uint64_t seed);

// "char", "word", "para", "stat", "topic".
const std::vector<std::string>& permutation_groups();

// Evaluates with one feature group rewired through `perm`: for the four
// column groups a permutation of the corpus's flattened column list, for
// "topic" a permutation of the table list. The identity permutation
// reproduces evaluate_records exactly; tests rely on that.
std::vector<PredictionRecord> evaluate_with_permutation(const ModelBundle& bundle,
                                                        const std::vector<Table>& tables,
                                                        PredictMode mode, uint64_t seed,
                                                        const std::string& group,
                                                        const std::vector<size_t>& perm,
                                                        const CrfModel* crf_override = nullptr);

struct PermutationGroupResult {
  std::string group;
  double baseline_weighted_f1 = 0.0;
  double mean_permuted_f1 = 0.0;
  double importance = 0.0;  // baseline minus mean permuted
  std::vector<double> trial_f1;
};

// Importance of each feature group as the weighted-F1 drop when that group's
// vectors are shuffled across columns (tables for "topic").
std::vector<PermutationGroupResult> permutation_importance(const ModelBundle& bundle,
                                                           const std::vector<Table>& tables,
                                                           PredictMode mode, uint64_t seed,
                                                           const std::vector<std::string>& groups,
                                                           int trials);

}  // namespace tabsense
