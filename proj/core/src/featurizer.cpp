#include "tabsense/featurizer.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

#include "tabsense/hash.hpp"

namespace tabsense {

namespace {

bool ascii_space(unsigned char c) { return std::isspace(c) != 0; }
bool ascii_digit(unsigned char c) { return c >= '0' && c <= '9'; }
bool ascii_alpha(unsigned char c) { return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z'); }
bool ascii_alnum(unsigned char c) { return ascii_digit(c) || ascii_alpha(c); }
bool ascii_punct(unsigned char c) { return std::ispunct(c) != 0; }

// Numeric magnitudes are clamped so that sums/variances over adversarial
// cells ("1e308") stay finite, which the feature contract requires.
constexpr double kNumericClamp = 1e15;

bool parse_numeric(const std::string& cell, double* out) {
  size_t b = 0, e = cell.size();
  while (b < e && ascii_space(static_cast<unsigned char>(cell[b]))) ++b;
  while (e > b && ascii_space(static_cast<unsigned char>(cell[e - 1]))) --e;
  if (b == e) return false;
  if (cell[b] == '+') ++b;  // from_chars rejects a leading plus
  if (b == e) return false;
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(cell.data() + b, cell.data() + e, v);
  if (ec != std::errc() || ptr != cell.data() + e) return false;
  if (!std::isfinite(v)) return false;
  *out = std::clamp(v, -kNumericClamp, kNumericClamp);
  return true;
}

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;
};

MeanStd mean_std(const std::vector<double>& v) {
  if (v.empty()) return {};
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  double var = 0.0;
  for (double x : v) var += (x - mean) * (x - mean);
  var /= static_cast<double>(v.size());  // population variance, defined for n=1
  return {mean, std::sqrt(var)};
}

double median_of_sorted(const std::vector<double>& v) {
  size_t n = v.size();
  if (n == 0) return 0.0;
  if (n % 2 == 1) return v[n / 2];
  return 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// Maximal runs of ASCII alphanumerics (non-ASCII bytes end a token), lowercased.
std::vector<std::string> tokenize(const std::string& cell) {
  std::vector<std::string> tokens;
  std::string cur;
  for (unsigned char c : cell) {
    if (ascii_alnum(c)) {
      cur.push_back(static_cast<char>(c >= 'A' && c <= 'Z' ? c - 'A' + 'a' : c));
    } else if (!cur.empty()) {
      tokens.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) tokens.push_back(std::move(cur));
  return tokens;
}

void l2_normalize(std::vector<double>& v) {
  double norm2 = 0.0;
  for (double x : v) norm2 += x * x;
  if (norm2 <= 0.0) return;  // zero vector stays exactly zero
  double inv = 1.0 / std::sqrt(norm2);
  for (double& x : v) x *= inv;
}

void add_hashed(std::vector<double>& v, std::string_view key, uint64_t seed) {
  uint64_t h = hash64(key, seed);
  size_t bucket = static_cast<size_t>(h % v.size());
  double sign = (hash64_alt(key, seed) & 1) ? 1.0 : -1.0;
  v[bucket] += sign;
}

}  // namespace

std::string FeatureConfig::default_alphabet() {
  return "abcdefghijklmnopqrstuvwxyz0123456789.,-_/' ";
}

void FeatureConfig::validate() const {
  if (d_word <= 0 || d_para <= 0) throw std::invalid_argument("feature dimensions must be positive");
  if (char_alphabet.empty()) throw std::invalid_argument("char alphabet must be non-empty");
  std::set<char> uniq(char_alphabet.begin(), char_alphabet.end());
  if (uniq.size() != char_alphabet.size())
    throw std::invalid_argument("char alphabet has duplicate characters");
}

void FeatureConfig::load_embeddings() {
  if (embedding_path.empty()) return;
  embeddings = std::make_shared<EmbeddingTable>(EmbeddingTable::load(embedding_path));
}

EmbeddingTable EmbeddingTable::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open embedding file: " + path.string());
  EmbeddingTable table;
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string token;
    ss >> token;
    std::vector<double> vec;
    double x;
    while (ss >> x) vec.push_back(x);
    if (vec.empty())
      throw std::runtime_error("embedding file line " + std::to_string(line_no) + " has no values");
    if (table.dim == 0) table.dim = static_cast<int>(vec.size());
    if (static_cast<int>(vec.size()) != table.dim)
      throw std::runtime_error("embedding file line " + std::to_string(line_no) +
                               " has inconsistent dimension");
    table.vectors[token] = std::move(vec);
  }
  if (table.vectors.empty()) throw std::runtime_error("embedding file is empty: " + path.string());
  return table;
}

const std::vector<std::string>& stat_feature_names() {
  static const std::vector<std::string> names = {
      "numeric_fraction",     "numeric_mean",        "numeric_std",
      "numeric_min",          "numeric_max",         "numeric_median",
      "length_mean",          "length_std",          "length_min",
      "length_max",           "token_count_mean",    "token_count_std",
      "empty_fraction",       "unique_fraction",     "value_entropy",
      "has_digit_fraction",   "has_alpha_fraction",  "has_punct_fraction",
      "has_space_fraction",   "digit_count_mean",    "digit_count_std",
      "all_upper_fraction",   "capitalized_fraction", "leading_digit_mean",
      "numeric_skew_proxy",   "log_row_count",       "modal_fraction",
  };
  return names;
}

std::vector<double> stat_features(const Column& column) {
  const auto& cells = column.cells;
  if (cells.empty()) throw std::invalid_argument("stat_features: column has no cells");
  const double n = static_cast<double>(cells.size());

  std::vector<double> numeric;
  std::vector<double> lengths, token_counts, digit_counts;
  double empty_cells = 0, has_digit = 0, has_alpha = 0, has_punct = 0, has_space = 0;
  double all_upper = 0, capitalized = 0;
  double leading_digit_sum = 0;
  std::unordered_map<std::string, int64_t> histogram;

  for (const std::string& cell : cells) {
    double v;
    if (parse_numeric(cell, &v)) {
      numeric.push_back(v);
      double a = std::fabs(v);
      if (a > 0) {
        while (a >= 10.0) a /= 10.0;
        while (a < 1.0) a *= 10.0;
        leading_digit_sum += std::floor(a);
      }
    }
    lengths.push_back(static_cast<double>(cell.size()));
    token_counts.push_back(static_cast<double>(tokenize(cell).size()));
    if (cell.empty()) ++empty_cells;

    int64_t digits = 0;
    bool any_digit = false, any_alpha = false, any_punct = false, any_space = false;
    bool any_lower_alpha = false;
    for (unsigned char c : cell) {
      if (ascii_digit(c)) {
        ++digits;
        any_digit = true;
      }
      if (ascii_alpha(c)) {
        any_alpha = true;
        if (c >= 'a' && c <= 'z') any_lower_alpha = true;
      }
      if (ascii_punct(c)) any_punct = true;
      if (ascii_space(c)) any_space = true;
    }
    digit_counts.push_back(static_cast<double>(digits));
    has_digit += any_digit;
    has_alpha += any_alpha;
    has_punct += any_punct;
    has_space += any_space;
    if (any_alpha && !any_lower_alpha) ++all_upper;
    if (!cell.empty() && static_cast<unsigned char>(cell[0]) >= 'A' &&
        static_cast<unsigned char>(cell[0]) <= 'Z')
      ++capitalized;
    ++histogram[cell];
  }

  std::sort(numeric.begin(), numeric.end());
  MeanStd num = mean_std(numeric);
  double num_median = median_of_sorted(numeric);
  MeanStd len = mean_std(lengths);
  MeanStd tok = mean_std(token_counts);
  MeanStd dig = mean_std(digit_counts);

  double entropy = 0.0;
  int64_t modal = 0;
  for (const auto& [value, count] : histogram) {
    double p = static_cast<double>(count) / n;
    entropy -= p * std::log(p);
    modal = std::max(modal, count);
  }

  std::vector<double> out(kStatDim, 0.0);
  out[0] = static_cast<double>(numeric.size()) / n;
  out[1] = num.mean;
  out[2] = num.std;
  out[3] = numeric.empty() ? 0.0 : numeric.front();
  out[4] = numeric.empty() ? 0.0 : numeric.back();
  out[5] = num_median;
  out[6] = len.mean;
  out[7] = len.std;
  out[8] = *std::min_element(lengths.begin(), lengths.end());
  out[9] = *std::max_element(lengths.begin(), lengths.end());
  out[10] = tok.mean;
  out[11] = tok.std;
  out[12] = empty_cells / n;
  out[13] = static_cast<double>(histogram.size()) / n;
  out[14] = entropy;
  out[15] = has_digit / n;
  out[16] = has_alpha / n;
  out[17] = has_punct / n;
  out[18] = has_space / n;
  out[19] = dig.mean;
  out[20] = dig.std;
  out[21] = all_upper / n;
  out[22] = capitalized / n;
  out[23] = numeric.empty() ? 0.0 : leading_digit_sum / static_cast<double>(numeric.size());
  out[24] = numeric.empty() ? 0.0 : (num.mean - num_median) / (num.std + 1e-9);
  out[25] = std::log1p(n);
  out[26] = static_cast<double>(modal) / n;
  return out;
}

std::vector<double> char_features(const Column& column, const FeatureConfig& config) {
  const std::string& alphabet = config.char_alphabet;
  const size_t a = alphabet.size();
  size_t lut[256];
  std::fill(std::begin(lut), std::end(lut), SIZE_MAX);
  for (size_t i = 0; i < a; ++i) lut[static_cast<unsigned char>(alphabet[i])] = i;

  const double n = static_cast<double>(column.cells.size());
  std::vector<double> sum(a, 0.0), sum_sq(a, 0.0), freq(a);
  for (const std::string& cell : column.cells) {
    std::fill(freq.begin(), freq.end(), 0.0);
    if (!cell.empty()) {
      const double inv_len = 1.0 / static_cast<double>(cell.size());
      for (unsigned char c : cell) {
        if (c >= 'A' && c <= 'Z') c = static_cast<unsigned char>(c - 'A' + 'a');
        size_t idx = lut[c];
        if (idx != SIZE_MAX) freq[idx] += inv_len;
      }
    }
    for (size_t i = 0; i < a; ++i) {
      sum[i] += freq[i];
      sum_sq[i] += freq[i] * freq[i];
    }
  }

  std::vector<double> out(2 * a);
  for (size_t i = 0; i < a; ++i) {
    double mean = sum[i] / n;
    double var = std::max(0.0, sum_sq[i] / n - mean * mean);
    out[2 * i] = mean;
    out[2 * i + 1] = std::sqrt(var);
  }
  return out;
}

std::vector<double> word_features(const Column& column, const FeatureConfig& config) {
  if (config.embeddings) {
    std::vector<double> v(static_cast<size_t>(config.embeddings->dim), 0.0);
    for (const std::string& cell : column.cells)
      for (const std::string& tok : tokenize(cell)) {
        auto it = config.embeddings->vectors.find(tok);
        if (it == config.embeddings->vectors.end()) continue;  // OOV dropped
        for (size_t i = 0; i < v.size(); ++i) v[i] += it->second[i];
      }
    l2_normalize(v);
    return v;
  }

  std::vector<double> v(static_cast<size_t>(config.d_word), 0.0);
  for (const std::string& cell : column.cells)
    for (const std::string& tok : tokenize(cell)) add_hashed(v, tok, config.hash_seed);
  l2_normalize(v);
  return v;
}

std::vector<double> para_features(const Column& column, const FeatureConfig& config) {
  std::vector<double> v(static_cast<size_t>(config.d_para), 0.0);
  std::string key;
  for (const std::string& cell : column.cells) {
    std::vector<std::string> tokens = tokenize(cell);
    for (size_t i = 0; i + 1 < tokens.size(); ++i) {
      key = "b:";
      key += tokens[i];
      key += '\x1f';
      key += tokens[i + 1];
      add_hashed(v, key, config.hash_seed);
    }
    for (const std::string& tok : tokens)
      for (size_t i = 0; i + 3 <= tok.size(); ++i) {
        key = "t:";
        key.append(tok, i, 3);
        add_hashed(v, key, config.hash_seed);
      }
  }
  l2_normalize(v);
  return v;
}

ColumnFeatures featurize_column(const Column& column, const FeatureConfig& config) {
  ColumnFeatures f;
  f.char_v = char_features(column, config);
  f.word_v = word_features(column, config);
  f.para_v = para_features(column, config);
  f.stat_v = stat_features(column);
  return f;
}

}  // namespace tabsense
