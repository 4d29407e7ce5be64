#include <doctest.h>

#include <filesystem>
#include <stdexcept>
#include <string>

#include "tabsense/config.hpp"

using namespace tabsense;

namespace {

std::filesystem::path fresh_dir(const std::string& tag) {
  std::filesystem::path dir = std::filesystem::temp_directory_path() / ("tabsense_cfg_" + tag);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("default config survives a text round trip byte for byte") {
  PipelineConfig c;
  std::string text = config_to_string(c);
  PipelineConfig parsed = parse_config(text);
  CHECK(config_to_string(parsed) == text);
}

TEST_CASE("non-default values round trip exactly") {
  PipelineConfig c;
  c.min_support = 3;
  c.folds = 7;
  c.feature.d_word = 48;
  c.feature.d_para = 96;
  c.feature.hash_seed = 1234567890123456789ull;
  c.feature.char_alphabet = "xyz ";
  c.feature.embedding_path = "vectors.txt";
  c.lda.K = 12;
  c.lda.alpha = 0.7;
  c.lda.beta = 0.015;
  c.lda.iters = 77;
  c.lda_infer_iters = 33;
  c.lda_infer_burnin = 11;
  c.lda.vocab_cap = 4096;
  c.network.subnet_hidden = 24;
  c.network.subnet_out = 12;
  c.network.primary_hidden = 40;
  c.network.dropout_rate = 0.25;
  c.network.bn_momentum = 0.05;
  c.network.bn_epsilon = 1e-6;
  c.classifier.epochs = 9;
  c.classifier.learning_rate = 3e-4;
  c.classifier.weight_decay = 2e-5;
  c.classifier.batch_size = 16;
  c.crf.epochs = 4;
  c.crf.learning_rate = 0.02;
  c.crf.batch_tables = 5;
  c.crf_init_scale = 0.125;
  c.permutation_trials = 8;
  c.saliency_k = 3;

  std::string text = config_to_string(c);
  PipelineConfig p = parse_config(text);

  CHECK(p.min_support == 3);
  CHECK(p.folds == 7);
  CHECK(p.feature.d_word == 48);
  CHECK(p.feature.d_para == 96);
  CHECK(p.feature.hash_seed == 1234567890123456789ull);
  CHECK(p.feature.char_alphabet == "xyz ");
  CHECK(p.feature.embedding_path == "vectors.txt");
  CHECK(p.lda.K == 12);
  CHECK(p.lda.alpha == 0.7);
  CHECK(p.lda.beta == 0.015);
  CHECK(p.lda.iters == 77);
  CHECK(p.lda_infer_iters == 33);
  CHECK(p.lda_infer_burnin == 11);
  CHECK(p.lda.vocab_cap == 4096);
  CHECK(p.network.subnet_hidden == 24);
  CHECK(p.network.subnet_out == 12);
  CHECK(p.network.primary_hidden == 40);
  CHECK(p.network.dropout_rate == 0.25);
  CHECK(p.network.bn_momentum == 0.05);
  CHECK(p.network.bn_epsilon == 1e-6);
  CHECK(p.classifier.epochs == 9);
  CHECK(p.classifier.learning_rate == 3e-4);
  CHECK(p.classifier.weight_decay == 2e-5);
  CHECK(p.classifier.batch_size == 16);
  CHECK(p.crf.epochs == 4);
  CHECK(p.crf.learning_rate == 0.02);
  CHECK(p.crf.batch_tables == 5);
  CHECK(p.crf_init_scale == 0.125);
  CHECK(p.permutation_trials == 8);
  CHECK(p.saliency_k == 3);
  CHECK(config_to_string(p) == text);
}

TEST_CASE("empty text yields the defaults") {
  PipelineConfig parsed = parse_config("");
  CHECK(config_to_string(parsed) == config_to_string(PipelineConfig{}));
}

TEST_CASE("comments, blank lines, and key whitespace are tolerated") {
  PipelineConfig p = parse_config(
      "# leading comment\n"
      "\n"
      "   \t \n"
      "  corpus.folds  =3\n"
      "# trailing comment\r\n"
      "corpus.min_support=4\r\n");
  CHECK(p.folds == 3);
  CHECK(p.min_support == 4);
}

TEST_CASE("the alphabet value is taken verbatim including trailing space") {
  PipelineConfig p = parse_config("feature.alphabet=xyz \n");
  CHECK(p.feature.char_alphabet == "xyz ");
  CHECK(p.feature.d_char() == 8);

  // Numeric values are trimmed; the alphabet is the single verbatim field.
  PipelineConfig q = parse_config("corpus.folds =  5  \n");
  CHECK(q.folds == 5);
}

TEST_CASE("lda.alpha accepts 'auto' and writes it back for non-positive values") {
  PipelineConfig p = parse_config("lda.alpha=auto\n");
  CHECK(p.lda.alpha == 0.0);
  std::string text = config_to_string(p);
  CHECK(text.find("lda.alpha=auto\n") != std::string::npos);

  PipelineConfig q = parse_config("lda.alpha=0.4\n");
  CHECK(q.lda.alpha == 0.4);
  CHECK(config_to_string(q).find("lda.alpha=0.4\n") != std::string::npos);
}

TEST_CASE("malformed lines report their line number") {
  CHECK_THROWS_WITH_AS(parse_config("corpus.folds\n"), doctest::Contains("config line 1"),
                       std::runtime_error);
  CHECK_THROWS_WITH_AS(parse_config("# ok\nnot.a.key=1\n"), doctest::Contains("config line 2"),
                       std::runtime_error);
  CHECK_THROWS_WITH_AS(parse_config("corpus.folds=2\ncorpus.folds=3\n"),
                       doctest::Contains("duplicate key"), std::runtime_error);
  CHECK_THROWS_WITH_AS(parse_config("=5\n"), doctest::Contains("empty key"), std::runtime_error);
  CHECK_THROWS_WITH_AS(parse_config("corpus.folds=two\n"), doctest::Contains("invalid value"),
                       std::runtime_error);
  CHECK_THROWS_WITH_AS(parse_config("neural.dropout=0.3x\n"), doctest::Contains("invalid value"),
                       std::runtime_error);
}

TEST_CASE("range validation names the offending key") {
  CHECK_THROWS_WITH_AS(parse_config("corpus.folds=1\n"), doctest::Contains("corpus.folds"),
                       std::invalid_argument);
  CHECK_THROWS_WITH_AS(parse_config("corpus.min_support=0\n"),
                       doctest::Contains("corpus.min_support"), std::invalid_argument);
  CHECK_THROWS_WITH_AS(parse_config("neural.dropout=1\n"), doctest::Contains("neural.dropout"),
                       std::invalid_argument);
  CHECK_THROWS_WITH_AS(parse_config("neural.bn_momentum=0\n"),
                       doctest::Contains("neural.bn_momentum"), std::invalid_argument);
  CHECK_THROWS_WITH_AS(parse_config("lda.infer_burnin=50\n"),
                       doctest::Contains("lda.infer_burnin"), std::invalid_argument);
  CHECK_THROWS_WITH_AS(parse_config("lda.topics=1\n"), doctest::Contains("lda.topics"),
                       std::invalid_argument);
  CHECK_THROWS_WITH_AS(parse_config("eval.saliency_k=0\n"), doctest::Contains("eval.saliency_k"),
                       std::invalid_argument);
  CHECK_THROWS_WITH_AS(parse_config("feature.alphabet=aba\n"), doctest::Contains("alphabet"),
                       std::invalid_argument);
}

TEST_CASE("config files round trip through the filesystem") {
  std::filesystem::path dir = fresh_dir("roundtrip");
  std::filesystem::path file = dir / "pipeline.cfg";

  PipelineConfig c;
  c.folds = 4;
  c.lda.K = 6;
  write_config(file, c);
  PipelineConfig loaded = load_config(file);
  CHECK(config_to_string(loaded) == config_to_string(c));

  CHECK_THROWS_AS(load_config(dir / "absent.cfg"), std::runtime_error);
  std::filesystem::remove_all(dir);
}
