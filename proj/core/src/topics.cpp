#include "tabsense/topics.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>
#include <stdexcept>

namespace tabsense {

namespace {

void split_lowercase_into(const std::string& text, std::vector<std::string>& out) {
  std::string cur;
  for (unsigned char c : text) {
    if (std::isspace(c)) {
      if (!cur.empty()) {
        out.push_back(std::move(cur));
        cur.clear();
      }
      continue;
    }
    if (c >= 'A' && c <= 'Z') c = static_cast<unsigned char>(c - 'A' + 'a');
    cur.push_back(static_cast<char>(c));
  }
  if (!cur.empty()) out.push_back(std::move(cur));
}

}  // namespace

std::vector<std::string> table_to_document(const Table& table) {
  std::vector<std::string> doc;
  for (const Column& col : table.columns)
    for (const std::string& cell : col.cells) split_lowercase_into(cell, doc);
  return doc;
}

GibbsLda::GibbsLda(std::vector<std::vector<int>> docs, int vocab_size, int K, double alpha,
                   double beta, uint64_t seed)
    : docs_(std::move(docs)),
      n_dk_(docs_.size(), static_cast<size_t>(K), 0.0),
      n_kw_(static_cast<size_t>(K), static_cast<size_t>(vocab_size), 0.0),
      n_k_(static_cast<size_t>(K), 0.0),
      K_(K),
      V_(vocab_size),
      alpha_(alpha),
      beta_(beta),
      rng_(seed),
      weights_(static_cast<size_t>(K), 0.0) {
  if (K < 2) throw std::invalid_argument("LDA needs K >= 2");
  if (vocab_size < 1) throw std::invalid_argument("LDA vocabulary is empty");

  z_.resize(docs_.size());
  for (size_t d = 0; d < docs_.size(); ++d) {
    z_[d].resize(docs_[d].size());
    for (size_t i = 0; i < docs_[d].size(); ++i) {
      int k = static_cast<int>(rng_.below(static_cast<uint64_t>(K_)));
      z_[d][i] = k;
      n_dk_(d, static_cast<size_t>(k)) += 1.0;
      n_kw_(static_cast<size_t>(k), static_cast<size_t>(docs_[d][i])) += 1.0;
      n_k_[static_cast<size_t>(k)] += 1.0;
      ++total_tokens_;
    }
  }
}

void GibbsLda::sample_token(size_t d, size_t i) {
  const int w = docs_[d][i];
  const int old_k = z_[d][i];
  n_dk_(d, static_cast<size_t>(old_k)) -= 1.0;
  n_kw_(static_cast<size_t>(old_k), static_cast<size_t>(w)) -= 1.0;
  n_k_[static_cast<size_t>(old_k)] -= 1.0;

  const double vbeta = static_cast<double>(V_) * beta_;
  double total = 0.0;
  for (int k = 0; k < K_; ++k) {
    double wgt = (n_dk_(d, static_cast<size_t>(k)) + alpha_) *
                 (n_kw_(static_cast<size_t>(k), static_cast<size_t>(w)) + beta_) /
                 (n_k_[static_cast<size_t>(k)] + vbeta);
    weights_[static_cast<size_t>(k)] = wgt;
    total += wgt;
  }
  double u = rng_.uniform01() * total;
  int new_k = K_ - 1;
  double acc = 0.0;
  for (int k = 0; k < K_; ++k) {
    acc += weights_[static_cast<size_t>(k)];
    if (u < acc) {
      new_k = k;
      break;
    }
  }

  z_[d][i] = new_k;
  n_dk_(d, static_cast<size_t>(new_k)) += 1.0;
  n_kw_(static_cast<size_t>(new_k), static_cast<size_t>(w)) += 1.0;
  n_k_[static_cast<size_t>(new_k)] += 1.0;
}

void GibbsLda::sweep() {
  for (size_t d = 0; d < docs_.size(); ++d)
    for (size_t i = 0; i < docs_[d].size(); ++i) sample_token(d, i);
}

Mat GibbsLda::estimate_topic_word() const {
  Mat tw(static_cast<size_t>(K_), static_cast<size_t>(V_));
  const double vbeta = static_cast<double>(V_) * beta_;
  for (int k = 0; k < K_; ++k)
    for (int w = 0; w < V_; ++w)
      tw(static_cast<size_t>(k), static_cast<size_t>(w)) =
          (n_kw_(static_cast<size_t>(k), static_cast<size_t>(w)) + beta_) /
          (n_k_[static_cast<size_t>(k)] + vbeta);
  return tw;
}

LdaModel train_lda(const std::vector<std::vector<std::string>>& docs, const LdaTrainConfig& config) {
  if (docs.empty()) throw std::invalid_argument("train_lda: no documents");
  if (config.K < 2) throw std::invalid_argument("train_lda: K must be >= 2");
  if (config.iters < 1) throw std::invalid_argument("train_lda: iters must be >= 1");

  std::map<std::string, int64_t> freq;
  for (const auto& doc : docs)
    for (const std::string& tok : doc) ++freq[tok];
  if (freq.empty()) throw std::runtime_error("train_lda: corpus has an empty vocabulary");

  std::vector<std::pair<std::string, int64_t>> ranked(freq.begin(), freq.end());
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  if (ranked.size() > config.vocab_cap) ranked.resize(config.vocab_cap);

  LdaModel model;
  model.K = config.K;
  model.alpha = config.effective_alpha();
  model.beta = config.beta;
  model.train_iters = static_cast<uint32_t>(config.iters);
  model.seed = config.seed;
  model.vocab_tokens.reserve(ranked.size());
  for (auto& [tok, n] : ranked) {
    model.vocab.emplace(tok, static_cast<int>(model.vocab_tokens.size()));
    model.vocab_tokens.push_back(tok);
  }

  std::vector<std::vector<int>> encoded(docs.size());
  for (size_t d = 0; d < docs.size(); ++d) {
    encoded[d].reserve(docs[d].size());
    for (const std::string& tok : docs[d]) {
      auto it = model.vocab.find(tok);
      if (it != model.vocab.end()) encoded[d].push_back(it->second);
    }
  }

  GibbsLda sampler(std::move(encoded), static_cast<int>(model.vocab_tokens.size()), model.K,
                   model.alpha, model.beta, config.seed);
  for (int it = 0; it < config.iters; ++it) sampler.sweep();
  model.topic_word = sampler.estimate_topic_word();
  return model;
}

TopicVector infer_topics(const LdaModel& model, const std::vector<std::string>& doc, int iters,
                         int burnin, uint64_t seed) {
  if (iters < 1 || burnin < 0 || burnin >= iters)
    throw std::invalid_argument("infer_topics: need 0 <= burnin < iters");
  const int K = model.K;

  std::vector<int> tokens;
  tokens.reserve(doc.size());
  for (const std::string& tok : doc) {
    auto it = model.vocab.find(tok);
    if (it != model.vocab.end()) tokens.push_back(it->second);
  }

  TopicVector tv;
  tv.theta.assign(static_cast<size_t>(K), 1.0 / static_cast<double>(K));
  if (tokens.empty()) return tv;  // prior only

  Rng rng(seed);
  std::vector<int> z(tokens.size());
  std::vector<double> n_dk(static_cast<size_t>(K), 0.0);
  for (size_t i = 0; i < tokens.size(); ++i) {
    int k = static_cast<int>(rng.below(static_cast<uint64_t>(K)));
    z[i] = k;
    n_dk[static_cast<size_t>(k)] += 1.0;
  }

  const double n_total = static_cast<double>(tokens.size());
  const double denom = n_total + static_cast<double>(K) * model.alpha;
  std::vector<double> weights(static_cast<size_t>(K));
  std::vector<double> theta_sum(static_cast<size_t>(K), 0.0);
  int samples = 0;

  for (int it = 0; it < iters; ++it) {
    for (size_t i = 0; i < tokens.size(); ++i) {
      const int w = tokens[i];
      n_dk[static_cast<size_t>(z[i])] -= 1.0;
      double total = 0.0;
      for (int k = 0; k < K; ++k) {
        double wgt = (n_dk[static_cast<size_t>(k)] + model.alpha) *
                     model.topic_word(static_cast<size_t>(k), static_cast<size_t>(w));
        weights[static_cast<size_t>(k)] = wgt;
        total += wgt;
      }
      double u = rng.uniform01() * total;
      int new_k = K - 1;
      double acc = 0.0;
      for (int k = 0; k < K; ++k) {
        acc += weights[static_cast<size_t>(k)];
        if (u < acc) {
          new_k = k;
          break;
        }
      }
      z[i] = new_k;
      n_dk[static_cast<size_t>(new_k)] += 1.0;
    }
    if (it >= burnin) {
      for (int k = 0; k < K; ++k)
        theta_sum[static_cast<size_t>(k)] += (n_dk[static_cast<size_t>(k)] + model.alpha) / denom;
      ++samples;
    }
  }

  for (int k = 0; k < K; ++k)
    tv.theta[static_cast<size_t>(k)] = theta_sum[static_cast<size_t>(k)] / static_cast<double>(samples);
  return tv;
}

double held_out_log_likelihood(const LdaModel& model, const std::vector<std::vector<std::string>>& docs,
                               int infer_iters, int infer_burnin, uint64_t seed) {
  double ll = 0.0;
  for (size_t d = 0; d < docs.size(); ++d) {
    TopicVector tv = infer_topics(model, docs[d], infer_iters, infer_burnin, seed + d);
    for (const std::string& tok : docs[d]) {
      auto it = model.vocab.find(tok);
      if (it == model.vocab.end()) continue;
      double p = 0.0;
      for (int k = 0; k < model.K; ++k)
        p += tv.theta[static_cast<size_t>(k)] *
             model.topic_word(static_cast<size_t>(k), static_cast<size_t>(it->second));
      ll += std::log(p);
    }
  }
  return ll;
}

Mat compute_type_topic_means(const std::vector<Table>& tables, const std::vector<TopicVector>& thetas,
                             size_t type_count) {
  if (tables.size() != thetas.size())
    throw std::invalid_argument("compute_type_topic_means: tables/thetas size mismatch");
  if (tables.empty()) return Mat(type_count, 0);

  const size_t K = thetas[0].theta.size();
  Mat means(type_count, K, 0.0);
  std::vector<int64_t> table_counts(type_count, 0);

  for (size_t i = 0; i < tables.size(); ++i) {
    std::vector<bool> present(type_count, false);
    for (const Column& c : tables[i].columns)
      if (c.label) present[static_cast<size_t>(*c.label)] = true;
    for (size_t t = 0; t < type_count; ++t) {
      if (!present[t]) continue;
      ++table_counts[t];
      for (size_t k = 0; k < K; ++k) means(t, k) += thetas[i].theta[k];
    }
  }
  for (size_t t = 0; t < type_count; ++t) {
    if (table_counts[t] == 0) continue;
    for (size_t k = 0; k < K; ++k) means(t, k) /= static_cast<double>(table_counts[t]);
  }
  return means;
}

std::vector<TopicSaliency> topic_saliency(const Mat& type_topic_means, int k) {
  const size_t type_count = type_topic_means.rows;
  const size_t K = type_topic_means.cols;
  const size_t kk = std::min<size_t>(static_cast<size_t>(std::max(k, 1)), type_count);

  std::vector<TopicSaliency> out;
  out.reserve(K);
  for (size_t topic = 0; topic < K; ++topic) {
    std::vector<TypeId> order(type_count);
    for (size_t t = 0; t < type_count; ++t) order[t] = static_cast<TypeId>(t);
    std::stable_sort(order.begin(), order.end(), [&](TypeId a, TypeId b) {
      return type_topic_means(static_cast<size_t>(a), topic) >
             type_topic_means(static_cast<size_t>(b), topic);
    });
    TopicSaliency s;
    s.topic = static_cast<int>(topic);
    s.top_types.assign(order.begin(), order.begin() + static_cast<long>(kk));
    double sum = 0.0;
    for (TypeId t : s.top_types) sum += type_topic_means(static_cast<size_t>(t), topic);
    s.score = sum / static_cast<double>(kk);
    out.push_back(std::move(s));
  }
  std::stable_sort(out.begin(), out.end(), [](const TopicSaliency& a, const TopicSaliency& b) {
    return a.score > b.score;
  });
  return out;
}

}  // namespace tabsense
