#include "tabsense/config.hpp"

#include <charconv>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string_view>
#include <system_error>

namespace tabsense {
namespace {

std::string trim(std::string_view s) {
  size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  size_t e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

[[noreturn]] void fail(size_t line, const std::string& what) {
  throw std::runtime_error("config line " + std::to_string(line) + ": " + what);
}

template <typename T>
T parse_number(const std::string& value, size_t line, const std::string& key) {
  std::string v = trim(value);
  T out{};
  const char* first = v.data();
  const char* last = v.data() + v.size();
  std::from_chars_result r{};
  if constexpr (std::is_floating_point_v<T>) {
    r = std::from_chars(first, last, out);
  } else {
    r = std::from_chars(first, last, out, 10);
  }
  if (r.ec != std::errc{} || r.ptr != last || v.empty()) {
    fail(line, "invalid value '" + v + "' for " + key);
  }
  return out;
}

std::string fmt_number(double v) {
  char buf[64];
  auto r = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, r.ptr);
}

template <typename T>
std::string fmt_number(T v) requires std::is_integral_v<T> {
  return std::to_string(v);
}

void check(bool ok, const std::string& what) {
  if (!ok) throw std::invalid_argument("config: " + what);
}

}  // namespace

void PipelineConfig::validate() const {
  check(min_support >= 1, "corpus.min_support must be at least 1");
  check(folds >= 2, "corpus.folds must be at least 2");
  feature.validate();
  check(lda.K >= 2, "lda.topics must be at least 2");
  check(lda.beta > 0, "lda.beta must be positive");
  check(lda.iters >= 1, "lda.train_iters must be at least 1");
  check(lda.vocab_cap >= 1, "lda.vocab_cap must be at least 1");
  check(lda_infer_iters >= 1, "lda.infer_iters must be at least 1");
  check(lda_infer_burnin >= 0, "lda.infer_burnin must be non-negative");
  check(lda_infer_burnin < lda_infer_iters, "lda.infer_burnin must be below lda.infer_iters");
  check(network.subnet_hidden >= 1, "neural.subnet_hidden must be at least 1");
  check(network.subnet_out >= 1, "neural.subnet_out must be at least 1");
  check(network.primary_hidden >= 1, "neural.primary_hidden must be at least 1");
  check(network.dropout_rate >= 0 && network.dropout_rate < 1,
        "neural.dropout must lie in [0, 1)");
  check(network.bn_momentum > 0 && network.bn_momentum <= 1,
        "neural.bn_momentum must lie in (0, 1]");
  check(network.bn_epsilon > 0, "neural.bn_epsilon must be positive");
  check(classifier.epochs >= 0, "neural.epochs must be non-negative");
  check(classifier.learning_rate >= 0, "neural.learning_rate must be non-negative");
  check(classifier.weight_decay >= 0, "neural.weight_decay must be non-negative");
  check(classifier.batch_size >= 1, "neural.batch_size must be at least 1");
  check(crf.epochs >= 0, "crf.epochs must be non-negative");
  check(crf.learning_rate >= 0, "crf.learning_rate must be non-negative");
  check(crf.batch_tables >= 1, "crf.batch_tables must be at least 1");
  check(crf_init_scale >= 0, "crf.init_scale must be non-negative");
  check(permutation_trials >= 1, "eval.permutation_trials must be at least 1");
  check(saliency_k >= 1, "eval.saliency_k must be at least 1");
}

std::string config_to_string(const PipelineConfig& c) {
  std::ostringstream out;
  out << "# tabsense pipeline configuration\n";
  out << "corpus.min_support=" << c.min_support << "\n";
  out << "corpus.folds=" << c.folds << "\n";
  out << "feature.d_word=" << c.feature.d_word << "\n";
  out << "feature.d_para=" << c.feature.d_para << "\n";
  out << "feature.hash_seed=" << c.feature.hash_seed << "\n";
  out << "feature.alphabet=" << c.feature.char_alphabet << "\n";
  out << "feature.embedding_path=" << c.feature.embedding_path << "\n";
  out << "lda.topics=" << c.lda.K << "\n";
  out << "lda.alpha=" << (c.lda.alpha > 0 ? fmt_number(c.lda.alpha) : std::string("auto")) << "\n";
  out << "lda.beta=" << fmt_number(c.lda.beta) << "\n";
  out << "lda.train_iters=" << c.lda.iters << "\n";
  out << "lda.infer_iters=" << c.lda_infer_iters << "\n";
  out << "lda.infer_burnin=" << c.lda_infer_burnin << "\n";
  out << "lda.vocab_cap=" << c.lda.vocab_cap << "\n";
  out << "neural.subnet_hidden=" << c.network.subnet_hidden << "\n";
  out << "neural.subnet_out=" << c.network.subnet_out << "\n";
  out << "neural.primary_hidden=" << c.network.primary_hidden << "\n";
  out << "neural.dropout=" << fmt_number(c.network.dropout_rate) << "\n";
  out << "neural.bn_momentum=" << fmt_number(c.network.bn_momentum) << "\n";
  out << "neural.bn_epsilon=" << fmt_number(c.network.bn_epsilon) << "\n";
  out << "neural.epochs=" << c.classifier.epochs << "\n";
  out << "neural.learning_rate=" << fmt_number(c.classifier.learning_rate) << "\n";
  out << "neural.weight_decay=" << fmt_number(c.classifier.weight_decay) << "\n";
  out << "neural.batch_size=" << c.classifier.batch_size << "\n";
  out << "crf.epochs=" << c.crf.epochs << "\n";
  out << "crf.learning_rate=" << fmt_number(c.crf.learning_rate) << "\n";
  out << "crf.batch_tables=" << c.crf.batch_tables << "\n";
  out << "crf.init_scale=" << fmt_number(c.crf_init_scale) << "\n";
  out << "eval.permutation_trials=" << c.permutation_trials << "\n";
  out << "eval.saliency_k=" << c.saliency_k << "\n";
  return out.str();
}

void write_config(const std::filesystem::path& path, const PipelineConfig& config) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open config file for writing: " + path.string());
  out << config_to_string(config);
  if (!out) throw std::runtime_error("failed writing config file: " + path.string());
}

PipelineConfig parse_config(const std::string& text) {
  PipelineConfig c;
  std::set<std::string> seen;
  std::istringstream in(text);
  std::string raw;
  size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    if (!raw.empty() && raw.back() == '\r') raw.pop_back();
    std::string stripped = trim(raw);
    if (stripped.empty() || stripped[0] == '#') continue;
    size_t eq = raw.find('=');
    if (eq == std::string::npos) fail(line_no, "expected key=value");
    std::string key = trim(raw.substr(0, eq));
    std::string value = raw.substr(eq + 1);  // verbatim; numeric parsers trim
    if (key.empty()) fail(line_no, "empty key");
    if (!seen.insert(key).second) fail(line_no, "duplicate key '" + key + "'");

    if (key == "corpus.min_support") {
      c.min_support = parse_number<int>(value, line_no, key);
    } else if (key == "corpus.folds") {
      c.folds = parse_number<int>(value, line_no, key);
    } else if (key == "feature.d_word") {
      c.feature.d_word = parse_number<int>(value, line_no, key);
    } else if (key == "feature.d_para") {
      c.feature.d_para = parse_number<int>(value, line_no, key);
    } else if (key == "feature.hash_seed") {
      c.feature.hash_seed = parse_number<uint64_t>(value, line_no, key);
    } else if (key == "feature.alphabet") {
      c.feature.char_alphabet = value;
    } else if (key == "feature.embedding_path") {
      c.feature.embedding_path = trim(value);
    } else if (key == "lda.topics") {
      c.lda.K = parse_number<int>(value, line_no, key);
    } else if (key == "lda.alpha") {
      std::string v = trim(value);
      c.lda.alpha = v == "auto" ? 0.0 : parse_number<double>(value, line_no, key);
    } else if (key == "lda.beta") {
      c.lda.beta = parse_number<double>(value, line_no, key);
    } else if (key == "lda.train_iters") {
      c.lda.iters = parse_number<int>(value, line_no, key);
    } else if (key == "lda.infer_iters") {
      c.lda_infer_iters = parse_number<int>(value, line_no, key);
    } else if (key == "lda.infer_burnin") {
      c.lda_infer_burnin = parse_number<int>(value, line_no, key);
    } else if (key == "lda.vocab_cap") {
      c.lda.vocab_cap = parse_number<size_t>(value, line_no, key);
    } else if (key == "neural.subnet_hidden") {
      c.network.subnet_hidden = parse_number<int>(value, line_no, key);
    } else if (key == "neural.subnet_out") {
      c.network.subnet_out = parse_number<int>(value, line_no, key);
    } else if (key == "neural.primary_hidden") {
      c.network.primary_hidden = parse_number<int>(value, line_no, key);
    } else if (key == "neural.dropout") {
      c.network.dropout_rate = parse_number<double>(value, line_no, key);
    } else if (key == "neural.bn_momentum") {
      c.network.bn_momentum = parse_number<double>(value, line_no, key);
    } else if (key == "neural.bn_epsilon") {
      c.network.bn_epsilon = parse_number<double>(value, line_no, key);
    } else if (key == "neural.epochs") {
      c.classifier.epochs = parse_number<int>(value, line_no, key);
    } else if (key == "neural.learning_rate") {
      c.classifier.learning_rate = parse_number<double>(value, line_no, key);
    } else if (key == "neural.weight_decay") {
      c.classifier.weight_decay = parse_number<double>(value, line_no, key);
    } else if (key == "neural.batch_size") {
      c.classifier.batch_size = parse_number<int>(value, line_no, key);
    } else if (key == "crf.epochs") {
      c.crf.epochs = parse_number<int>(value, line_no, key);
    } else if (key == "crf.learning_rate") {
      c.crf.learning_rate = parse_number<double>(value, line_no, key);
    } else if (key == "crf.batch_tables") {
      c.crf.batch_tables = parse_number<int>(value, line_no, key);
    } else if (key == "crf.init_scale") {
      c.crf_init_scale = parse_number<double>(value, line_no, key);
    } else if (key == "eval.permutation_trials") {
      c.permutation_trials = parse_number<int>(value, line_no, key);
    } else if (key == "eval.saliency_k") {
      c.saliency_k = parse_number<int>(value, line_no, key);
    } else {
      fail(line_no, "unknown key '" + key + "'");
    }
  }
  c.validate();
  return c;
}

PipelineConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open config file: " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

}  // namespace tabsense
