#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include "tabsense/config.hpp"
#include "tabsense/corpus.hpp"
#include "tabsense/crf.hpp"
#include "tabsense/mat.hpp"
#include "tabsense/neural.hpp"
#include "tabsense/topics.hpp"

namespace tabsense {

// Everything a trained pipeline needs to predict, in one file. Serialization
// is fully deterministic (fixed section order, sorted embedding tokens, no
// timestamps): retraining with the same corpus, config and seed reproduces
// the bundle byte for byte. The byte layout is specified in
// docs/model_format.md and gated by a format version.
struct ModelBundle {
  uint64_t seed = 0;
  std::string corpus_fingerprint;
  PipelineConfig config;

  TypeVocabulary vocabulary;
  std::optional<LdaModel> lda;
  Mat type_topic_means;  // |types| x K when lda is present, else empty

  std::optional<ClassifierModel> classifier_base;   // stats + char/word/para
  std::optional<ClassifierModel> classifier_topic;  // adds the topic subnetwork
  std::optional<CrfModel> crf;

  // Cross-component dimension consistency: classifier output width and CRF
  // dimension equal |vocabulary|; the topic subnetwork width equals LDA K.
  void validate() const;
};

std::string serialize_bundle(const ModelBundle& bundle);
ModelBundle deserialize_bundle(std::string_view data);

void save_bundle(const std::filesystem::path& path, const ModelBundle& bundle);
ModelBundle load_bundle(const std::filesystem::path& path);

}  // namespace tabsense
