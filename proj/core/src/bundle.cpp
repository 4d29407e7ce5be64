#include "tabsense/bundle.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

#include "tabsense/binio.hpp"

namespace tabsense {
namespace {

constexpr char kMagic[8] = {'T', 'A', 'B', 'S', 'E', 'N', 'S', 'E'};
constexpr uint32_t kFormatVersion = 1;

[[noreturn]] void fail(const std::string& what) {
  throw std::runtime_error("model bundle: " + what);
}

void write_tensor(ByteWriter& w, std::string_view name, const double* p, size_t rows,
                  size_t cols) {
  w.str(name);
  w.u32(static_cast<uint32_t>(rows));
  w.u32(static_cast<uint32_t>(cols));
  w.f64_span(p, rows * std::max<size_t>(cols, 1));
}

// Reads one named tensor and enforces the expected name and shape; shape
// mismatches mean the file disagrees with its own recorded config.
void read_tensor(ByteReader& r, std::string_view name, double* p, size_t rows, size_t cols) {
  std::string got = r.str();
  if (got != name) fail("expected tensor '" + std::string(name) + "', found '" + got + "'");
  uint32_t fr = r.u32();
  uint32_t fc = r.u32();
  if (fr != rows || fc != cols) {
    fail("tensor '" + got + "' has shape " + std::to_string(fr) + "x" + std::to_string(fc) +
         ", expected " + std::to_string(rows) + "x" + std::to_string(cols));
  }
  r.f64_into(p, rows * std::max<size_t>(cols, 1));
}

std::string encode_meta(const ModelBundle& b) {
  ByteWriter w;
  w.u64(b.seed);
  w.str(b.corpus_fingerprint);
  w.str(config_to_string(b.config));
  return w.take();
}

std::string encode_embeddings(const EmbeddingTable& table) {
  ByteWriter w;
  w.u32(static_cast<uint32_t>(table.dim));
  w.u64(table.vectors.size());
  std::vector<const std::string*> tokens;
  tokens.reserve(table.vectors.size());
  for (const auto& [tok, vec] : table.vectors) tokens.push_back(&tok);
  std::sort(tokens.begin(), tokens.end(),
            [](const std::string* a, const std::string* b) { return *a < *b; });
  for (const std::string* tok : tokens) {
    w.str(*tok);
    const auto& vec = table.vectors.at(*tok);
    w.f64_span(vec.data(), vec.size());
  }
  return w.take();
}

std::string encode_vocabulary(const TypeVocabulary& vocab) {
  ByteWriter w;
  w.u32(static_cast<uint32_t>(vocab.size()));
  for (const auto& name : vocab.names) w.str(name);
  return w.take();
}

std::string encode_lda(const LdaModel& lda, const Mat& type_topic_means) {
  ByteWriter w;
  w.u32(static_cast<uint32_t>(lda.K));
  w.f64(lda.alpha);
  w.f64(lda.beta);
  w.u32(lda.train_iters);
  w.u64(lda.seed);
  w.u32(static_cast<uint32_t>(lda.vocab_tokens.size()));
  for (const auto& tok : lda.vocab_tokens) w.str(tok);
  write_tensor(w, "topic_word", lda.topic_word.data.data(), lda.topic_word.rows,
               lda.topic_word.cols);
  write_tensor(w, "type_topic_means", type_topic_means.data.data(), type_topic_means.rows,
               type_topic_means.cols);
  return w.take();
}

std::string encode_classifier(const ClassifierModel& model) {
  ByteWriter w;
  const NetworkConfig& c = model.config;
  w.u32(static_cast<uint32_t>(c.d_char));
  w.u32(static_cast<uint32_t>(c.d_word));
  w.u32(static_cast<uint32_t>(c.d_para));
  w.u32(static_cast<uint32_t>(c.d_topic));
  w.u32(static_cast<uint32_t>(c.subnet_hidden));
  w.u32(static_cast<uint32_t>(c.subnet_out));
  w.u32(static_cast<uint32_t>(c.primary_hidden));
  w.f64(c.dropout_rate);
  w.u8(c.use_topic ? 1 : 0);
  w.u32(static_cast<uint32_t>(c.type_count));
  w.u64(c.seed);
  w.f64(c.bn_momentum);
  w.f64(c.bn_epsilon);

  // param_refs/state_refs enumerate in a fixed order; that order is the
  // serialized tensor order.
  auto& mutable_model = const_cast<ClassifierModel&>(model);
  auto params = param_refs(mutable_model);
  auto state = state_refs(mutable_model);
  w.u32(static_cast<uint32_t>(params.size() + state.size()));
  for (const auto& list : {params, state}) {
    for (const auto& ref : list) {
      write_tensor(w, ref.name, ref.values->data(), ref.rows, ref.cols);
    }
  }
  return w.take();
}

std::string encode_crf(const CrfModel& crf) {
  ByteWriter w;
  w.u32(static_cast<uint32_t>(crf.type_count));
  write_tensor(w, "pairwise", crf.pairwise.data.data(), crf.pairwise.rows, crf.pairwise.cols);
  w.u32(static_cast<uint32_t>(crf.meta.epochs));
  w.f64(crf.meta.learning_rate);
  w.u32(static_cast<uint32_t>(crf.meta.batch_tables));
  w.u64(crf.meta.seed);
  return w.take();
}

void decode_meta(ByteReader& r, ModelBundle& b) {
  b.seed = r.u64();
  b.corpus_fingerprint = r.str();
  b.config = parse_config(r.str());
}

std::shared_ptr<const EmbeddingTable> decode_embeddings(ByteReader& r) {
  auto table = std::make_shared<EmbeddingTable>();
  table->dim = static_cast<int>(r.u32());
  if (table->dim <= 0) fail("embedded word vectors have non-positive dimension");
  uint64_t count = r.u64();
  for (uint64_t i = 0; i < count; ++i) {
    std::string tok = r.str();
    std::vector<double> vec(static_cast<size_t>(table->dim));
    r.f64_into(vec.data(), vec.size());
    if (!table->vectors.emplace(std::move(tok), std::move(vec)).second) {
      fail("duplicate token in embedded word vectors");
    }
  }
  return table;
}

TypeVocabulary decode_vocabulary(ByteReader& r) {
  uint32_t n = r.u32();
  std::vector<std::string> names;
  names.reserve(n);
  for (uint32_t i = 0; i < n; ++i) names.push_back(r.str());
  return TypeVocabulary::from_names(std::move(names));
}

void decode_lda(ByteReader& r, ModelBundle& b) {
  LdaModel lda;
  lda.K = static_cast<int>(r.u32());
  lda.alpha = r.f64();
  lda.beta = r.f64();
  lda.train_iters = r.u32();
  lda.seed = r.u64();
  uint32_t v = r.u32();
  lda.vocab_tokens.reserve(v);
  for (uint32_t i = 0; i < v; ++i) lda.vocab_tokens.push_back(r.str());
  for (size_t i = 0; i < lda.vocab_tokens.size(); ++i) {
    if (!lda.vocab.emplace(lda.vocab_tokens[i], static_cast<int>(i)).second) {
      fail("duplicate token in topic model vocabulary");
    }
  }
  lda.topic_word = Mat(lda.K, v);
  read_tensor(r, "topic_word", lda.topic_word.data.data(), lda.topic_word.rows,
              lda.topic_word.cols);
  b.type_topic_means = Mat(b.vocabulary.size(), lda.K);
  read_tensor(r, "type_topic_means", b.type_topic_means.data.data(), b.type_topic_means.rows,
              b.type_topic_means.cols);
  b.lda = std::move(lda);
}

ClassifierModel decode_classifier(ByteReader& r) {
  NetworkConfig c;
  c.d_char = static_cast<int>(r.u32());
  c.d_word = static_cast<int>(r.u32());
  c.d_para = static_cast<int>(r.u32());
  c.d_topic = static_cast<int>(r.u32());
  c.subnet_hidden = static_cast<int>(r.u32());
  c.subnet_out = static_cast<int>(r.u32());
  c.primary_hidden = static_cast<int>(r.u32());
  c.dropout_rate = r.f64();
  c.use_topic = r.u8() != 0;
  c.type_count = static_cast<int>(r.u32());
  c.seed = r.u64();
  c.bn_momentum = r.f64();
  c.bn_epsilon = r.f64();
  ClassifierModel model = init_network(c);  // shapes only; every tensor is overwritten
  auto params = param_refs(model);
  auto state = state_refs(model);
  uint32_t tensor_count = r.u32();
  if (tensor_count != params.size() + state.size()) {
    fail("classifier tensor count " + std::to_string(tensor_count) + " does not match config");
  }
  for (const auto& list : {params, state}) {
    for (const auto& ref : list) read_tensor(r, ref.name, ref.values->data(), ref.rows, ref.cols);
  }
  return model;
}

CrfModel decode_crf(ByteReader& r) {
  CrfModel crf;
  crf.type_count = static_cast<int>(r.u32());
  crf.pairwise = Mat(crf.type_count, crf.type_count);
  read_tensor(r, "pairwise", crf.pairwise.data.data(), crf.pairwise.rows, crf.pairwise.cols);
  crf.meta.epochs = static_cast<int>(r.u32());
  crf.meta.learning_rate = r.f64();
  crf.meta.batch_tables = static_cast<int>(r.u32());
  crf.meta.seed = r.u64();
  return crf;
}

void check(bool ok, const std::string& what) {
  if (!ok) fail(what);
}

}  // namespace

void ModelBundle::validate() const {
  check(!vocabulary.names.empty(), "empty type vocabulary");
  size_t t = vocabulary.size();
  if (lda) {
    check(lda->K >= 2, "topic model has fewer than 2 topics");
    check(lda->topic_word.rows == static_cast<size_t>(lda->K) &&
              lda->topic_word.cols == lda->vocab_size(),
          "topic_word shape disagrees with topic model config");
    check(type_topic_means.rows == t && type_topic_means.cols == static_cast<size_t>(lda->K),
          "type_topic_means shape disagrees with vocabulary and topic count");
  } else {
    check(type_topic_means.empty(), "type_topic_means present without a topic model");
    check(!classifier_topic, "topic classifier present without a topic model");
  }
  auto check_classifier = [&](const ClassifierModel& m, bool topic, const char* which) {
    std::string who(which);
    check(m.config.use_topic == topic, who + " classifier has the wrong topic wiring");
    check(m.config.type_count == static_cast<int>(t),
          who + " classifier output width does not equal the type vocabulary size");
    check(m.config.d_char == config.feature.d_char(),
          who + " classifier char input width disagrees with the feature config");
    check(m.config.d_word == config.feature.word_dim(),
          who + " classifier word input width disagrees with the feature config");
    check(m.config.d_para == config.feature.d_para,
          who + " classifier paragraph input width disagrees with the feature config");
    if (topic) {
      check(lda && m.config.d_topic == lda->K,
            who + " classifier topic input width does not equal the topic count");
    }
  };
  if (classifier_base) check_classifier(*classifier_base, false, "base");
  if (classifier_topic) check_classifier(*classifier_topic, true, "topic");
  if (crf) {
    check(crf->type_count == static_cast<int>(t),
          "structured layer dimension does not equal the type vocabulary size");
    check(crf->pairwise.rows == t && crf->pairwise.cols == t,
          "structured layer matrix is not |types| x |types|");
  }
}

std::string serialize_bundle(const ModelBundle& bundle) {
  bundle.validate();
  std::vector<std::pair<std::string, std::string>> sections;
  sections.emplace_back("meta", encode_meta(bundle));
  if (bundle.config.feature.embeddings) {
    sections.emplace_back("embeddings", encode_embeddings(*bundle.config.feature.embeddings));
  }
  sections.emplace_back("vocabulary", encode_vocabulary(bundle.vocabulary));
  if (bundle.lda) sections.emplace_back("lda", encode_lda(*bundle.lda, bundle.type_topic_means));
  if (bundle.classifier_base) {
    sections.emplace_back("classifier_base", encode_classifier(*bundle.classifier_base));
  }
  if (bundle.classifier_topic) {
    sections.emplace_back("classifier_topic", encode_classifier(*bundle.classifier_topic));
  }
  if (bundle.crf) sections.emplace_back("crf", encode_crf(*bundle.crf));

  ByteWriter w;
  w.raw(kMagic, sizeof(kMagic));
  w.u32(kFormatVersion);
  w.u32(static_cast<uint32_t>(sections.size()));
  for (const auto& [name, payload] : sections) {
    w.str(name);
    w.u64(payload.size());
    w.raw(payload.data(), payload.size());
  }
  return w.take();
}

ModelBundle deserialize_bundle(std::string_view data) {
  ByteReader r(data);
  std::string_view magic = r.raw(sizeof(kMagic));
  if (std::memcmp(magic.data(), kMagic, sizeof(kMagic)) != 0) {
    fail("not a tabsense model file (bad magic)");
  }
  uint32_t version = r.u32();
  if (version != kFormatVersion) {
    fail("unsupported format version " + std::to_string(version) + "; this build reads version " +
         std::to_string(kFormatVersion));
  }
  uint32_t section_count = r.u32();
  std::vector<std::pair<std::string, std::string_view>> sections;
  std::set<std::string> seen;
  for (uint32_t i = 0; i < section_count; ++i) {
    std::string name = r.str();
    uint64_t len = r.u64();
    std::string_view payload = r.raw(len);
    if (!seen.insert(name).second) fail("duplicate section '" + name + "'");
    sections.emplace_back(std::move(name), payload);
  }
  if (!r.at_end()) fail("trailing bytes after last section");

  // Sections may legally be absent (partial training); order in the file is
  // the writer's fixed order but decoding only needs meta and vocabulary
  // before lda, which that order guarantees.
  ModelBundle b;
  std::shared_ptr<const EmbeddingTable> embeddings;
  bool have_meta = false;
  bool have_vocab = false;
  for (const auto& [name, payload] : sections) {
    ByteReader pr(payload);
    if (name == "meta") {
      decode_meta(pr, b);
      have_meta = true;
    } else if (name == "embeddings") {
      embeddings = decode_embeddings(pr);
    } else if (name == "vocabulary") {
      b.vocabulary = decode_vocabulary(pr);
      have_vocab = true;
    } else if (name == "lda") {
      if (!have_vocab) fail("lda section precedes vocabulary");
      decode_lda(pr, b);
    } else if (name == "classifier_base") {
      b.classifier_base = decode_classifier(pr);
    } else if (name == "classifier_topic") {
      b.classifier_topic = decode_classifier(pr);
    } else if (name == "crf") {
      b.crf = decode_crf(pr);
    } else {
      fail("unknown section '" + name + "'");
    }
    if (!pr.at_end()) fail("section '" + name + "' has trailing bytes");
  }
  if (!have_meta) fail("missing meta section");
  if (!have_vocab) fail("missing vocabulary section");
  if (embeddings) b.config.feature.embeddings = std::move(embeddings);
  if (!b.config.feature.embedding_path.empty() && !b.config.feature.embeddings) {
    fail("config names an embedding file but the bundle carries no embedded word vectors");
  }
  b.validate();
  return b;
}

void save_bundle(const std::filesystem::path& path, const ModelBundle& bundle) {
  std::string data = serialize_bundle(bundle);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open model file for writing: " + path.string());
  out.write(data.data(), static_cast<std::streamsize>(data.size()));
  if (!out) throw std::runtime_error("failed writing model file: " + path.string());
}

ModelBundle load_bundle(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open model file: " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  std::string data = buf.str();
  return deserialize_bundle(data);
}

}  // namespace tabsense
