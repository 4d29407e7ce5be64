#pragma once

#include <filesystem>
#include <string>

#include "tabsense/crf.hpp"
#include "tabsense/featurizer.hpp"
#include "tabsense/neural.hpp"
#include "tabsense/topics.hpp"

namespace tabsense {

// Every trainable-pipeline hyperparameter with its default. Serialized as
// flat `key=value` lines; a written default config round-trips exactly.
struct PipelineConfig {
  int min_support = 20;
  int folds = 5;

  FeatureConfig feature;

  LdaTrainConfig lda;        // lda.alpha <= 0 selects the 50/K default
  int lda_infer_iters = 50;
  int lda_infer_burnin = 25;

  NetworkConfig network;     // input dims and type_count are filled at train time
  TrainConfig classifier;

  CrfTrainConfig crf;
  double crf_init_scale = 0.1;

  int permutation_trials = 5;
  int saliency_k = 5;

  void validate() const;
};

// Full dump, one key per line, `#` full-line comments. String values are
// taken verbatim after `=` (the char alphabet ends with a space).
std::string config_to_string(const PipelineConfig& config);
void write_config(const std::filesystem::path& path, const PipelineConfig& config);

// Missing keys keep defaults; unknown keys are an error.
PipelineConfig parse_config(const std::string& text);
PipelineConfig load_config(const std::filesystem::path& path);

}  // namespace tabsense
