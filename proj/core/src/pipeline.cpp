#include "tabsense/pipeline.hpp"

#include <algorithm>
#include <cstdio>
#include <numeric>
#include <stdexcept>

#include "tabsense/binio.hpp"
#include "tabsense/featurizer.hpp"
#include "tabsense/hash.hpp"
#include "tabsense/neural.hpp"
#include "tabsense/rng.hpp"
#include "tabsense/topics.hpp"

namespace tabsense {
namespace {

constexpr uint64_t kFingerprintSeed = 0x7ab1e5c0f1d9e21bull;

[[noreturn]] void mode_error(PredictMode mode, const std::string& missing) {
  throw std::runtime_error("prediction mode '" + std::string(predict_mode_name(mode)) +
                           "' requires " + missing);
}

bool mode_needs_topic(PredictMode mode) {
  return mode == PredictMode::kNoStruct || mode == PredictMode::kFull;
}

bool mode_needs_crf(PredictMode mode) {
  return mode == PredictMode::kNoTopic || mode == PredictMode::kFull;
}

struct ResolvedStages {
  const ClassifierModel* scorer = nullptr;
  const CrfModel* crf = nullptr;  // null for unstructured modes
  bool needs_topic = false;
};

ResolvedStages resolve_stages(const ModelBundle& bundle, PredictMode mode,
                              const CrfModel* crf_override) {
  ResolvedStages r;
  r.needs_topic = mode_needs_topic(mode);
  if (r.needs_topic) {
    if (!bundle.classifier_topic) mode_error(mode, "a trained topic classifier");
    if (!bundle.lda) mode_error(mode, "a trained topic model");
    r.scorer = &*bundle.classifier_topic;
  } else {
    if (!bundle.classifier_base) mode_error(mode, "a trained base classifier");
    r.scorer = &*bundle.classifier_base;
  }
  if (mode_needs_crf(mode)) {
    r.crf = crf_override ? crf_override : (bundle.crf ? &*bundle.crf : nullptr);
    if (!r.crf) mode_error(mode, "a trained structured layer");
    if (r.crf->type_count != r.scorer->config.type_count) {
      throw std::runtime_error("structured layer dimension does not match the classifier");
    }
  }
  return r;
}

size_t argmax_lowest(const std::vector<double>& v) {
  size_t best = 0;
  for (size_t i = 1; i < v.size(); ++i) {
    if (v[i] > v[best]) best = i;
  }
  return best;
}

std::vector<ColumnPrediction> predict_from_features(const ResolvedStages& stages,
                                                    const std::vector<ColumnFeatures>& features,
                                                    const TopicVector* theta) {
  std::vector<ColumnPrediction> out;
  out.reserve(features.size());
  if (!stages.crf) {
    for (size_t j = 0; j < features.size(); ++j) {
      std::vector<double> probs = forward(*stages.scorer, features[j], theta, Mode::kEval);
      size_t t = argmax_lowest(probs);
      out.push_back({static_cast<int>(j), static_cast<TypeId>(t), probs[t]});
    }
    return out;
  }
  Mat unaries = unaries_from_classifier(*stages.scorer, features, theta);
  std::vector<TypeId> decoded = map_decode(unaries, stages.crf->pairwise);
  Marginals m = marginals(unaries, stages.crf->pairwise);
  for (size_t j = 0; j < features.size(); ++j) {
    out.push_back({static_cast<int>(j), decoded[j],
                   m.node(j, static_cast<size_t>(decoded[j]))});
  }
  return out;
}

std::vector<ColumnFeatures> featurize_table(const Table& table, const FeatureConfig& fc) {
  std::vector<ColumnFeatures> features;
  features.reserve(table.columns.size());
  for (const Column& col : table.columns) features.push_back(featurize_column(col, fc));
  return features;
}

TopicVector table_theta(const ModelBundle& bundle, const Table& table, uint64_t seed) {
  return infer_topics(*bundle.lda, table_to_document(table), bundle.config.lda_infer_iters,
                      bundle.config.lda_infer_burnin, hash64(table.id, seed));
}

void check_labels_in_range(const std::vector<Table>& tables, size_t type_count) {
  for (const Table& t : tables) {
    for (const Column& c : t.columns) {
      if (c.label && (*c.label < 0 || static_cast<size_t>(*c.label) >= type_count)) {
        throw std::out_of_range("table " + t.id + " carries a label outside the type vocabulary");
      }
    }
  }
}

// Tables usable for structured training: two or more columns, all labeled.
std::vector<size_t> fully_labeled_multicolumn(const std::vector<Table>& tables) {
  std::vector<size_t> out;
  for (size_t i = 0; i < tables.size(); ++i) {
    const Table& t = tables[i];
    if (t.columns.size() < 2) continue;
    bool all = std::all_of(t.columns.begin(), t.columns.end(),
                           [](const Column& c) { return c.label.has_value(); });
    if (all) out.push_back(i);
  }
  return out;
}

CrfModel train_crf_on(const ModelBundle& bundle, const ClassifierModel& scorer,
                      const std::vector<Table>& tables,
                      const std::vector<std::vector<ColumnFeatures>>& features,
                      const std::vector<TopicVector>* thetas, uint64_t stage_seed) {
  std::vector<size_t> usable = fully_labeled_multicolumn(tables);
  if (usable.empty()) {
    throw std::runtime_error(
        "structured training requires at least one fully labeled table with 2 or more columns");
  }
  std::vector<Mat> unary_store;
  unary_store.reserve(usable.size());
  for (size_t i : usable) {
    const TopicVector* theta = thetas ? &(*thetas)[i] : nullptr;
    unary_store.push_back(unaries_from_classifier(scorer, features[i], theta));
  }
  std::vector<CrfBatchItem> items;
  items.reserve(usable.size());
  for (size_t k = 0; k < usable.size(); ++k) {
    items.push_back({&unary_store[k], gold_sequence(tables[usable[k]])});
  }
  CrfModel crf;
  crf.type_count = static_cast<int>(bundle.vocabulary.size());
  crf.pairwise = init_pairwise_from_cooccurrence(cooccurrence(tables, bundle.vocabulary),
                                                 bundle.config.crf_init_scale);
  CrfTrainConfig cc = bundle.config.crf;
  cc.seed = stage_seed;
  train_crf(crf, items, cc);
  return crf;
}

std::vector<Table> gather(const std::vector<Table>& tables, const std::vector<size_t>& idx) {
  std::vector<Table> out;
  out.reserve(idx.size());
  for (size_t i : idx) out.push_back(tables[i]);
  return out;
}

}  // namespace

PredictMode parse_predict_mode(std::string_view name) {
  if (name == "base") return PredictMode::kBase;
  if (name == "nostruct") return PredictMode::kNoStruct;
  if (name == "notopic") return PredictMode::kNoTopic;
  if (name == "full") return PredictMode::kFull;
  throw std::invalid_argument("unknown prediction mode '" + std::string(name) +
                              "' (expected base, nostruct, notopic or full)");
}

std::string_view predict_mode_name(PredictMode mode) {
  switch (mode) {
    case PredictMode::kBase: return "base";
    case PredictMode::kNoStruct: return "nostruct";
    case PredictMode::kNoTopic: return "notopic";
    case PredictMode::kFull: return "full";
  }
  throw std::invalid_argument("invalid prediction mode value");
}

std::string corpus_fingerprint(const std::vector<Table>& tables) {
  ByteWriter w;
  w.u64(tables.size());
  for (const Table& t : tables) {
    w.str(t.id);
    w.u32(static_cast<uint32_t>(t.columns.size()));
    for (const Column& c : t.columns) {
      w.str(c.header_raw);
      w.i64(c.label ? static_cast<int64_t>(*c.label) : -1);
      w.u64(c.cells.size());
      for (const std::string& cell : c.cells) w.str(cell);
    }
  }
  uint64_t h = hash64(w.bytes(), kFingerprintSeed);
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return std::string(buf, 16);
}

ModelBundle train_bundle(const std::vector<Table>& tables, const TypeVocabulary& vocabulary,
                         const PipelineConfig& config, const TrainOptions& options) {
  config.validate();
  if (tables.empty()) throw std::invalid_argument("training requires at least one table");
  if (vocabulary.names.empty()) throw std::invalid_argument("training requires a type vocabulary");
  check_labels_in_range(tables, vocabulary.size());

  ModelBundle b;
  b.seed = options.seed;
  b.config = config;
  b.vocabulary = vocabulary;
  b.corpus_fingerprint = corpus_fingerprint(tables);
  if (!b.config.feature.embedding_path.empty() && !b.config.feature.embeddings) {
    b.config.feature.load_embeddings();
  }

  // Stage seeds are independent hashes of the master seed, so disabling one
  // stage never shifts another stage's randomness.
  const uint64_t lda_seed = hash64("stage:lda", options.seed);
  const uint64_t base_seed = hash64("stage:classifier_base", options.seed);
  const uint64_t topic_seed = hash64("stage:classifier_topic", options.seed);
  const uint64_t crf_seed = hash64("stage:crf", options.seed);

  std::vector<TopicVector> thetas;
  if (options.with_lda) {
    const std::vector<Table>& lda_tables = options.lda_tables ? *options.lda_tables : tables;
    std::vector<std::vector<std::string>> docs;
    docs.reserve(lda_tables.size());
    for (const Table& t : lda_tables) docs.push_back(table_to_document(t));
    LdaTrainConfig lc = b.config.lda;
    lc.seed = lda_seed;
    b.lda = train_lda(docs, lc);
    thetas.reserve(tables.size());
    for (const Table& t : tables) {
      thetas.push_back(infer_topics(*b.lda, table_to_document(t), b.config.lda_infer_iters,
                                    b.config.lda_infer_burnin, hash64(t.id, lda_seed)));
    }
    b.type_topic_means = compute_type_topic_means(tables, thetas, vocabulary.size());
  }

  std::vector<std::vector<ColumnFeatures>> features;
  if (options.with_classifier) {
    features.reserve(tables.size());
    for (const Table& t : tables) features.push_back(featurize_table(t, b.config.feature));

    std::vector<LabeledExample> base_examples;
    std::vector<LabeledExample> topic_examples;
    for (size_t i = 0; i < tables.size(); ++i) {
      for (size_t j = 0; j < tables[i].columns.size(); ++j) {
        const Column& col = tables[i].columns[j];
        if (!col.label) continue;
        base_examples.push_back({&features[i][j], nullptr, *col.label});
        if (b.lda) topic_examples.push_back({&features[i][j], &thetas[i], *col.label});
      }
    }
    if (base_examples.empty()) {
      throw std::runtime_error("classifier training requires at least one labeled column");
    }

    NetworkConfig nc;
    nc.d_char = b.config.feature.d_char();
    nc.d_word = b.config.feature.word_dim();
    nc.d_para = b.config.feature.d_para;
    nc.subnet_hidden = b.config.network.subnet_hidden;
    nc.subnet_out = b.config.network.subnet_out;
    nc.primary_hidden = b.config.network.primary_hidden;
    nc.dropout_rate = b.config.network.dropout_rate;
    nc.bn_momentum = b.config.network.bn_momentum;
    nc.bn_epsilon = b.config.network.bn_epsilon;
    nc.type_count = static_cast<int>(vocabulary.size());

    {
      nc.use_topic = false;
      nc.d_topic = 0;
      nc.seed = hash64("init", base_seed);
      ClassifierModel model = init_network(nc);
      TrainConfig tc = b.config.classifier;
      tc.seed = hash64("sgd", base_seed);
      train_classifier(model, base_examples, tc);
      b.classifier_base = std::move(model);
    }
    if (b.lda) {
      nc.use_topic = true;
      nc.d_topic = b.lda->K;
      nc.seed = hash64("init", topic_seed);
      ClassifierModel model = init_network(nc);
      TrainConfig tc = b.config.classifier;
      tc.seed = hash64("sgd", topic_seed);
      train_classifier(model, topic_examples, tc);
      b.classifier_topic = std::move(model);
    }
  }

  if (options.with_crf) {
    if (!b.classifier_base) {
      throw std::runtime_error("structured training requires a trained classifier");
    }
    const ClassifierModel& scorer = b.classifier_topic ? *b.classifier_topic : *b.classifier_base;
    b.crf = train_crf_on(b, scorer, tables, features, b.classifier_topic ? &thetas : nullptr,
                         crf_seed);
  }

  b.validate();
  return b;
}

CrfModel train_base_crf(const ModelBundle& bundle, const std::vector<Table>& train_tables,
                        uint64_t seed) {
  if (!bundle.classifier_base) {
    throw std::runtime_error("structured training requires a trained base classifier");
  }
  check_labels_in_range(train_tables, bundle.vocabulary.size());
  std::vector<std::vector<ColumnFeatures>> features;
  features.reserve(train_tables.size());
  for (const Table& t : train_tables) features.push_back(featurize_table(t, bundle.config.feature));
  return train_crf_on(bundle, *bundle.classifier_base, train_tables, features, nullptr,
                      hash64("stage:crf_base", seed));
}

std::vector<ColumnPrediction> predict_table(const ModelBundle& bundle, const Table& table,
                                            PredictMode mode, uint64_t seed,
                                            const CrfModel* crf_override) {
  if (table.columns.empty()) return {};
  ResolvedStages stages = resolve_stages(bundle, mode, crf_override);
  std::vector<ColumnFeatures> features = featurize_table(table, bundle.config.feature);
  TopicVector theta;
  if (stages.needs_topic) theta = table_theta(bundle, table, seed);
  return predict_from_features(stages, features, stages.needs_topic ? &theta : nullptr);
}

std::vector<PredictionRecord> evaluate_records(const ModelBundle& bundle,
                                               const std::vector<Table>& tables, PredictMode mode,
                                               uint64_t seed, const CrfModel* crf_override) {
  std::vector<PredictionRecord> records;
  for (const Table& table : tables) {
    std::vector<ColumnPrediction> preds = predict_table(bundle, table, mode, seed, crf_override);
    for (size_t j = 0; j < table.columns.size(); ++j) {
      if (!table.columns[j].label) continue;
      records.push_back({table.id, static_cast<int>(j), *table.columns[j].label, preds[j].type});
    }
  }
  return records;
}

AblationResult run_ablation(const std::vector<Table>& tables, const TypeVocabulary& vocabulary,
                            const PipelineConfig& config, uint64_t seed) {
  config.validate();
  const PredictMode modes[] = {PredictMode::kBase, PredictMode::kNoStruct, PredictMode::kNoTopic,
                               PredictMode::kFull};
  AblationResult result;
  result.folds = split_folds(tables.size(), config.folds, hash64("folds", seed));
  result.variants.resize(4);
  for (size_t v = 0; v < 4; ++v) result.variants[v].mode = modes[v];

  for (size_t f = 0; f < result.folds.size(); ++f) {
    std::vector<Table> train_tables = gather(tables, result.folds[f].train);
    std::vector<Table> test_tables = gather(tables, result.folds[f].test);
    const uint64_t fold_seed = hash64("fold:" + std::to_string(f), seed);

    TrainOptions options;
    options.seed = fold_seed;
    ModelBundle bundle = train_bundle(train_tables, vocabulary, config, options);
    CrfModel crf_base = train_base_crf(bundle, train_tables, fold_seed);

    // One eval seed for every variant so the topic-aware modes see identical
    // per-table topic draws and differ only in model wiring.
    const uint64_t eval_seed = hash64("eval", fold_seed);
    for (size_t v = 0; v < 4; ++v) {
      const CrfModel* crf_override = modes[v] == PredictMode::kNoTopic ? &crf_base : nullptr;
      std::vector<PredictionRecord> recs =
          evaluate_records(bundle, test_tables, modes[v], eval_seed, crf_override);
      result.variants[v].fold_weighted_f1.push_back(
          f1_report(recs, vocabulary.size()).weighted_f1);
      auto& pooled = result.variants[v].records;
      pooled.insert(pooled.end(), recs.begin(), recs.end());
    }
  }
  for (auto& variant : result.variants) {
    variant.report = f1_report(variant.records, vocabulary.size());
    variant.weighted_f1 = mean_ci95(variant.fold_weighted_f1);
  }
  return result;
}

const std::vector<std::string>& permutation_groups() {
  static const std::vector<std::string> groups = {"char", "word", "para", "stat", "topic"};
  return groups;
}

std::vector<PredictionRecord> evaluate_with_permutation(
    const ModelBundle& bundle, const std::vector<Table>& tables, PredictMode mode, uint64_t seed,
    const std::string& group, const std::vector<size_t>& perm, const CrfModel* crf_override) {
  const auto& groups = permutation_groups();
  if (std::find(groups.begin(), groups.end(), group) == groups.end()) {
    throw std::invalid_argument("unknown feature group '" + group + "'");
  }
  ResolvedStages stages = resolve_stages(bundle, mode, crf_override);
  if (group == "topic" && !stages.needs_topic) {
    throw std::invalid_argument("feature group 'topic' requires a topic-aware prediction mode");
  }

  std::vector<std::vector<ColumnFeatures>> features;
  std::vector<TopicVector> thetas;
  features.reserve(tables.size());
  for (const Table& t : tables) {
    features.push_back(featurize_table(t, bundle.config.feature));
    if (stages.needs_topic) thetas.push_back(table_theta(bundle, t, seed));
  }

  auto require_size = [&](size_t n, const char* what) {
    if (perm.size() != n) {
      throw std::invalid_argument("permutation covers " + std::to_string(perm.size()) + " " +
                                  what + ", expected " + std::to_string(n));
    }
    std::vector<bool> hit(n, false);
    for (size_t p : perm) {
      if (p >= n || hit[p]) throw std::invalid_argument("not a permutation");
      hit[p] = true;
    }
  };

  if (group == "topic") {
    require_size(tables.size(), "tables");
    std::vector<TopicVector> shuffled(thetas.size());
    for (size_t i = 0; i < perm.size(); ++i) shuffled[i] = thetas[perm[i]];
    thetas = std::move(shuffled);
  } else {
    std::vector<std::pair<size_t, size_t>> flat;
    for (size_t i = 0; i < features.size(); ++i) {
      for (size_t j = 0; j < features[i].size(); ++j) flat.emplace_back(i, j);
    }
    require_size(flat.size(), "columns");
    auto pick = [&](const ColumnFeatures& f) -> const std::vector<double>& {
      if (group == "char") return f.char_v;
      if (group == "word") return f.word_v;
      if (group == "para") return f.para_v;
      return f.stat_v;
    };
    std::vector<std::vector<double>> sources;
    sources.reserve(flat.size());
    for (size_t k = 0; k < flat.size(); ++k) {
      auto [si, sj] = flat[perm[k]];
      sources.push_back(pick(features[si][sj]));
    }
    for (size_t k = 0; k < flat.size(); ++k) {
      auto [i, j] = flat[k];
      ColumnFeatures& f = features[i][j];
      if (group == "char") f.char_v = std::move(sources[k]);
      else if (group == "word") f.word_v = std::move(sources[k]);
      else if (group == "para") f.para_v = std::move(sources[k]);
      else f.stat_v = std::move(sources[k]);
    }
  }

  std::vector<PredictionRecord> records;
  for (size_t i = 0; i < tables.size(); ++i) {
    std::vector<ColumnPrediction> preds =
        predict_from_features(stages, features[i], stages.needs_topic ? &thetas[i] : nullptr);
    for (size_t j = 0; j < tables[i].columns.size(); ++j) {
      if (!tables[i].columns[j].label) continue;
      records.push_back(
          {tables[i].id, static_cast<int>(j), *tables[i].columns[j].label, preds[j].type});
    }
  }
  return records;
}

std::vector<PermutationGroupResult> permutation_importance(const ModelBundle& bundle,
                                                           const std::vector<Table>& tables,
                                                           PredictMode mode, uint64_t seed,
                                                           const std::vector<std::string>& groups,
                                                           int trials) {
  if (trials < 1) throw std::invalid_argument("permutation importance requires at least 1 trial");
  const size_t type_count = bundle.vocabulary.size();
  const double baseline =
      f1_report(evaluate_records(bundle, tables, mode, seed), type_count).weighted_f1;
  size_t column_count = 0;
  for (const Table& t : tables) column_count += t.columns.size();

  std::vector<PermutationGroupResult> results;
  results.reserve(groups.size());
  for (const std::string& group : groups) {
    PermutationGroupResult r;
    r.group = group;
    r.baseline_weighted_f1 = baseline;
    const size_t n = group == "topic" ? tables.size() : column_count;
    for (int trial = 0; trial < trials; ++trial) {
      Rng rng(hash64(group + ":" + std::to_string(trial), hash64("perm", seed)));
      std::vector<size_t> perm(n);
      std::iota(perm.begin(), perm.end(), size_t{0});
      rng.shuffle(perm);
      std::vector<PredictionRecord> recs =
          evaluate_with_permutation(bundle, tables, mode, seed, group, perm);
      r.trial_f1.push_back(f1_report(recs, type_count).weighted_f1);
    }
    r.mean_permuted_f1 =
        std::accumulate(r.trial_f1.begin(), r.trial_f1.end(), 0.0) / r.trial_f1.size();
    r.importance = baseline - r.mean_permuted_f1;
    results.push_back(std::move(r));
  }
  return results;
}

}  // namespace tabsense
