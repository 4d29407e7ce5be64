#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "tabsense/bundle.hpp"
#include "tabsense/config.hpp"
#include "tabsense/corpus.hpp"
#include "tabsense/hash.hpp"
#include "tabsense/pipeline.hpp"
#include "tabsense/topics.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace tabsense;

namespace {

std::string fmt6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

std::ofstream open_for_write(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
  return out;
}

PipelineConfig config_from(const std::string& config_path) {
  return config_path.empty() ? PipelineConfig{} : load_config(config_path);
}

TypeVocabulary vocabulary_from(const std::string& vocab_path, const std::vector<Table>& tables,
                               int min_support) {
  if (!vocab_path.empty()) return read_vocabulary(vocab_path);
  return build_vocabulary(tables, min_support);
}

size_t labeled_column_count(const std::vector<Table>& tables) {
  size_t n = 0;
  for (const Table& t : tables) {
    for (const Column& c : t.columns) n += c.label.has_value();
  }
  return n;
}

void write_report_tsv(const fs::path& path, const MetricReport& report,
                      const TypeVocabulary& vocab) {
  std::ofstream out = open_for_write(path);
  out << "type\tprecision\trecall\tf1\tsupport\n";
  for (const TypeMetrics& m : report.per_type) {
    out << vocab.name(m.type) << '\t' << fmt6(m.precision) << '\t' << fmt6(m.recall) << '\t'
        << fmt6(m.f1) << '\t' << m.support << '\n';
  }
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

json report_to_json(const MetricReport& report, const TypeVocabulary& vocab) {
  json per_type = json::array();
  for (const TypeMetrics& m : report.per_type) {
    per_type.push_back({{"type", vocab.name(m.type)},
                        {"precision", m.precision},
                        {"recall", m.recall},
                        {"f1", m.f1},
                        {"support", m.support}});
  }
  return {{"macro_f1", report.macro_f1}, {"weighted_f1", report.weighted_f1},
          {"per_type", per_type}};
}

double accuracy_of(const std::vector<PredictionRecord>& records) {
  if (records.empty()) return 0.0;
  size_t hit = 0;
  for (const PredictionRecord& r : records) hit += r.predicted == r.gold;
  return static_cast<double>(hit) / static_cast<double>(records.size());
}

struct IngestArgs {
  std::string corpus, out_dir, config_path, vocab_path;
  uint64_t seed = 0;
};

void cmd_ingest(const IngestArgs& a) {
  PipelineConfig config = config_from(a.config_path);
  LoadResult loaded = load_corpus(a.corpus);
  if (loaded.tables.empty()) throw std::runtime_error("corpus contains no usable tables");
  TypeVocabulary vocab = vocabulary_from(a.vocab_path, loaded.tables, config.min_support);
  label_tables(loaded.tables, vocab);
  std::vector<FoldSplit> folds =
      split_folds(loaded.tables.size(), config.folds, hash64("folds", a.seed));

  fs::create_directories(a.out_dir);
  write_vocabulary(fs::path(a.out_dir) / "vocabulary.txt", vocab);
  write_folds(fs::path(a.out_dir) / "folds.tsv", folds, loaded.tables);
  {
    std::ofstream skips = open_for_write(fs::path(a.out_dir) / "skips.tsv");
    for (const SkipRecord& s : loaded.skipped) skips << s.path << '\t' << s.reason << '\n';
  }
  std::cout << "tables=" << loaded.tables.size() << " skipped=" << loaded.skipped.size()
            << " types=" << vocab.size() << " labeled_columns=" << labeled_column_count(loaded.tables)
            << " folds=" << folds.size() << "\n";
}

struct TrainArgs {
  std::string corpus, out_path, config_path, vocab_path, lda_corpus;
  uint64_t seed = 0;
  bool no_lda = false, no_classifier = false, no_crf = false;
};

void cmd_train(const TrainArgs& a) {
  PipelineConfig config = config_from(a.config_path);
  LoadResult loaded = load_corpus(a.corpus);
  if (loaded.tables.empty()) throw std::runtime_error("corpus contains no usable tables");
  TypeVocabulary vocab = vocabulary_from(a.vocab_path, loaded.tables, config.min_support);
  label_tables(loaded.tables, vocab);

  TrainOptions options;
  options.seed = a.seed;
  options.with_lda = !a.no_lda;
  options.with_classifier = !a.no_classifier;
  options.with_crf = !a.no_crf;
  LoadResult lda_loaded;
  if (!a.lda_corpus.empty()) {
    lda_loaded = load_corpus(a.lda_corpus);
    if (lda_loaded.tables.empty()) throw std::runtime_error("topic corpus contains no usable tables");
    options.lda_tables = &lda_loaded.tables;
  }

  ModelBundle bundle = train_bundle(loaded.tables, vocab, config, options);
  save_bundle(a.out_path, bundle);
  std::cout << "model=" << a.out_path << " fingerprint=" << bundle.corpus_fingerprint
            << " tables=" << loaded.tables.size()
            << " labeled_columns=" << labeled_column_count(loaded.tables)
            << " types=" << vocab.size() << " lda=" << (bundle.lda ? "yes" : "no")
            << " classifier=" << (bundle.classifier_base ? "yes" : "no")
            << " crf=" << (bundle.crf ? "yes" : "no") << "\n";
}

struct PredictArgs {
  std::string corpus, model_path, mode = "full", out_path;
  uint64_t seed = 0;
};

void cmd_predict(const PredictArgs& a) {
  ModelBundle bundle = load_bundle(a.model_path);
  PredictMode mode = parse_predict_mode(a.mode);
  LoadResult loaded = load_corpus(a.corpus);

  std::ofstream file;
  if (!a.out_path.empty()) file = open_for_write(a.out_path);
  std::ostream& out = a.out_path.empty() ? std::cout : file;
  for (const Table& table : loaded.tables) {
    std::vector<ColumnPrediction> preds = predict_table(bundle, table, mode, a.seed);
    for (const ColumnPrediction& p : preds) {
      out << table.id << '\t' << p.column_index << '\t' << bundle.vocabulary.name(p.type) << '\t'
          << fmt6(p.confidence) << '\n';
    }
  }
  if (!out) throw std::runtime_error("failed writing predictions");
}

struct EvaluateArgs {
  std::string corpus, model_path, mode = "full", out_dir;
  uint64_t seed = 0;
};

void cmd_evaluate(const EvaluateArgs& a) {
  ModelBundle bundle = load_bundle(a.model_path);
  PredictMode mode = parse_predict_mode(a.mode);
  LoadResult loaded = load_corpus(a.corpus);
  label_tables(loaded.tables, bundle.vocabulary);
  if (labeled_column_count(loaded.tables) == 0) {
    throw std::runtime_error("no column header matches the model's type vocabulary");
  }

  std::vector<PredictionRecord> records = evaluate_records(bundle, loaded.tables, mode, a.seed);
  MetricReport report = f1_report(records, bundle.vocabulary.size());
  double accuracy = accuracy_of(records);

  if (!a.out_dir.empty()) {
    fs::create_directories(a.out_dir);
    write_report_tsv(fs::path(a.out_dir) / "report.tsv", report, bundle.vocabulary);
    json summary = report_to_json(report, bundle.vocabulary);
    summary["mode"] = a.mode;
    summary["seed"] = a.seed;
    summary["model"] = a.model_path;
    summary["corpus"] = a.corpus;
    summary["records"] = records.size();
    summary["accuracy"] = accuracy;
    std::ofstream out = open_for_write(fs::path(a.out_dir) / "summary.json");
    out << summary.dump(2) << "\n";
  }
  std::cout << "mode=" << a.mode << " records=" << records.size()
            << " accuracy=" << fmt6(accuracy) << " macro_f1=" << fmt6(report.macro_f1)
            << " weighted_f1=" << fmt6(report.weighted_f1) << "\n";
}

struct AblateArgs {
  std::string corpus, config_path, vocab_path, out_dir;
  uint64_t seed = 0;
};

void cmd_ablate(const AblateArgs& a) {
  PipelineConfig config = config_from(a.config_path);
  LoadResult loaded = load_corpus(a.corpus);
  if (loaded.tables.empty()) throw std::runtime_error("corpus contains no usable tables");
  TypeVocabulary vocab = vocabulary_from(a.vocab_path, loaded.tables, config.min_support);
  label_tables(loaded.tables, vocab);

  AblationResult result = run_ablation(loaded.tables, vocab, config, a.seed);

  json variants = json::array();
  for (const AblationVariant& v : result.variants) {
    std::string name(predict_mode_name(v.mode));
    if (!a.out_dir.empty()) {
      write_report_tsv(fs::path(a.out_dir) / ("report-" + name + ".tsv"), v.report, vocab);
    }
    variants.push_back({{"mode", name},
                        {"records", v.records.size()},
                        {"accuracy", accuracy_of(v.records)},
                        {"macro_f1", v.report.macro_f1},
                        {"weighted_f1", v.report.weighted_f1},
                        {"fold_weighted_f1", v.fold_weighted_f1},
                        {"fold_mean", v.weighted_f1.mean},
                        {"fold_ci95_half_width", v.weighted_f1.half_width}});
    std::cout << "mode=" << name << " weighted_f1=" << fmt6(v.report.weighted_f1)
              << " macro_f1=" << fmt6(v.report.macro_f1)
              << " accuracy=" << fmt6(accuracy_of(v.records))
              << " fold_mean=" << fmt6(v.weighted_f1.mean) << "±"
              << fmt6(v.weighted_f1.half_width) << "\n";
  }
  if (!a.out_dir.empty()) {
    json summary = {{"seed", a.seed},
                    {"folds", result.folds.size()},
                    {"tables", loaded.tables.size()},
                    {"variants", variants}};
    std::ofstream out = open_for_write(fs::path(a.out_dir) / "ablation.json");
    out << summary.dump(2) << "\n";
  }
}

struct InspectArgs {
  std::string model_path, out_path;
  int k = 0;  // 0 = the trained config's saliency_k
};

void cmd_inspect_topics(const InspectArgs& a) {
  ModelBundle bundle = load_bundle(a.model_path);
  if (!bundle.lda) throw std::runtime_error("model carries no topic model");
  int k = a.k > 0 ? a.k : bundle.config.saliency_k;
  std::vector<TopicSaliency> saliency = topic_saliency(bundle.type_topic_means, k);

  std::ofstream file;
  if (!a.out_path.empty()) file = open_for_write(a.out_path);
  std::ostream& out = a.out_path.empty() ? std::cout : file;
  out << "topic_id\tscore\ttypes\n";
  for (const TopicSaliency& s : saliency) {
    out << s.topic << '\t' << fmt6(s.score) << '\t';
    for (size_t i = 0; i < s.top_types.size(); ++i) {
      if (i) out << ',';
      out << bundle.vocabulary.name(s.top_types[i]);
    }
    out << '\n';
  }
  if (!out) throw std::runtime_error("failed writing topic report");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"semantic column type detection over relational tables"};
  app.require_subcommand(1);

  IngestArgs ingest;
  CLI::App* c_ingest = app.add_subcommand("ingest", "load a corpus, build vocabulary and folds");
  c_ingest->add_option("corpus", ingest.corpus, "CSV directory or manifest file")->required();
  c_ingest->add_option("--out", ingest.out_dir, "output directory")->required();
  c_ingest->add_option("--config", ingest.config_path, "pipeline config file");
  c_ingest->add_option("--vocab", ingest.vocab_path, "reuse an existing vocabulary file");
  c_ingest->add_option("--seed", ingest.seed, "fold shuffle seed");
  c_ingest->callback([&] { cmd_ingest(ingest); });

  TrainArgs train;
  CLI::App* c_train = app.add_subcommand("train", "train a model bundle");
  c_train->add_option("corpus", train.corpus, "CSV directory or manifest file")->required();
  c_train->add_option("--out", train.out_path, "output model file")->required();
  c_train->add_option("--config", train.config_path, "pipeline config file");
  c_train->add_option("--vocab", train.vocab_path, "vocabulary file (otherwise built from the corpus)");
  c_train->add_option("--lda-corpus", train.lda_corpus, "separate corpus for topic-model training");
  c_train->add_option("--seed", train.seed, "master training seed");
  c_train->add_flag("--no-lda", train.no_lda, "skip the topic model (and topic classifier)");
  c_train->add_flag("--no-classifier", train.no_classifier, "skip the classifiers");
  c_train->add_flag("--no-crf", train.no_crf, "skip the structured layer");
  c_train->callback([&] { cmd_train(train); });

  PredictArgs predict;
  CLI::App* c_predict = app.add_subcommand("predict", "predict column types as TSV");
  c_predict->add_option("corpus", predict.corpus, "CSV directory or manifest file")->required();
  c_predict->add_option("--model", predict.model_path, "trained model file")->required();
  c_predict->add_option("--mode", predict.mode, "base|nostruct|notopic|full");
  c_predict->add_option("--seed", predict.seed, "topic inference seed");
  c_predict->add_option("--out", predict.out_path, "output TSV (default stdout)");
  c_predict->callback([&] { cmd_predict(predict); });

  EvaluateArgs evaluate;
  CLI::App* c_evaluate = app.add_subcommand("evaluate", "score predictions against header labels");
  c_evaluate->add_option("corpus", evaluate.corpus, "CSV directory or manifest file")->required();
  c_evaluate->add_option("--model", evaluate.model_path, "trained model file")->required();
  c_evaluate->add_option("--mode", evaluate.mode, "base|nostruct|notopic|full");
  c_evaluate->add_option("--seed", evaluate.seed, "topic inference seed");
  c_evaluate->add_option("--out", evaluate.out_dir, "report directory");
  c_evaluate->callback([&] { cmd_evaluate(evaluate); });

  AblateArgs ablate;
  CLI::App* c_ablate = app.add_subcommand("ablate", "cross-validated comparison of all modes");
  c_ablate->add_option("corpus", ablate.corpus, "CSV directory or manifest file")->required();
  c_ablate->add_option("--config", ablate.config_path, "pipeline config file");
  c_ablate->add_option("--vocab", ablate.vocab_path, "vocabulary file (otherwise built from the corpus)");
  c_ablate->add_option("--seed", ablate.seed, "master seed");
  c_ablate->add_option("--out", ablate.out_dir, "report directory");
  c_ablate->callback([&] { cmd_ablate(ablate); });

  InspectArgs inspect;
  CLI::App* c_inspect = app.add_subcommand("inspect-topics", "rank topics by type association");
  c_inspect->add_option("--model", inspect.model_path, "trained model file")->required();
  c_inspect->add_option("--k", inspect.k, "types listed per topic");
  c_inspect->add_option("--out", inspect.out_path, "output TSV (default stdout)");
  c_inspect->callback([&] { cmd_inspect_topics(inspect); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
