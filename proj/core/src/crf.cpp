#include "tabsense/crf.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "tabsense/rng.hpp"

namespace tabsense {

namespace {

void check_dims(const Mat& unaries, const Mat& pairwise) {
  if (unaries.rows < 1) throw std::invalid_argument("crf: need at least one column");
  if (pairwise.rows != pairwise.cols) throw std::invalid_argument("crf: pairwise matrix not square");
  if (pairwise.rows != unaries.cols)
    throw std::invalid_argument("crf: pairwise dimension does not match unary width");
}

double logsumexp(const double* v, size_t n) {
  double mx = v[0];
  for (size_t i = 1; i < n; ++i) mx = std::max(mx, v[i]);
  double s = 0.0;
  for (size_t i = 0; i < n; ++i) s += std::exp(v[i] - mx);
  return mx + std::log(s);
}

// Forward messages: alpha(i, t) = log sum over prefixes ending in t.
Mat forward_messages(const Mat& u, const Mat& p) {
  const size_t m = u.rows, T = u.cols;
  Mat alpha(m, T);
  for (size_t t = 0; t < T; ++t) alpha(0, t) = u(0, t);
  std::vector<double> acc(T);
  for (size_t i = 1; i < m; ++i)
    for (size_t t = 0; t < T; ++t) {
      for (size_t s = 0; s < T; ++s) acc[s] = alpha(i - 1, s) + p(s, t);
      alpha(i, t) = u(i, t) + logsumexp(acc.data(), T);
    }
  return alpha;
}

// Backward messages: beta(i, s) = log sum over suffixes given label s at i.
Mat backward_messages(const Mat& u, const Mat& p) {
  const size_t m = u.rows, T = u.cols;
  Mat beta(m, T, 0.0);
  std::vector<double> acc(T);
  for (size_t i = m - 1; i-- > 0;)
    for (size_t s = 0; s < T; ++s) {
      for (size_t t = 0; t < T; ++t) acc[t] = p(s, t) + u(i + 1, t) + beta(i + 1, t);
      beta(i, s) = logsumexp(acc.data(), T);
    }
  return beta;
}

}  // namespace

Mat unaries_from_classifier(const ClassifierModel& model,
                            const std::vector<ColumnFeatures>& columns, const TopicVector* topic) {
  if (columns.empty()) throw std::invalid_argument("unaries_from_classifier: no columns");
  const size_t T = static_cast<size_t>(model.config.type_count);
  Mat u(columns.size(), T);
  for (size_t i = 0; i < columns.size(); ++i) {
    std::vector<double> probs = forward(model, columns[i], topic, Mode::kEval);
    for (size_t t = 0; t < T; ++t) u(i, t) = std::log(probs[t]);
  }
  return u;
}

std::vector<TypeId> gold_sequence(const Table& table) {
  std::vector<TypeId> gold;
  gold.reserve(table.columns.size());
  for (const Column& c : table.columns) {
    if (!c.label) throw std::invalid_argument("table " + table.id + " has an unlabeled column");
    gold.push_back(*c.label);
  }
  return gold;
}

double log_partition(const Mat& unaries, const Mat& pairwise) {
  check_dims(unaries, pairwise);
  Mat alpha = forward_messages(unaries, pairwise);
  return logsumexp(alpha.row(alpha.rows - 1), alpha.cols);
}

std::vector<TypeId> map_decode(const Mat& unaries, const Mat& pairwise) {
  check_dims(unaries, pairwise);
  const size_t m = unaries.rows, T = unaries.cols;

  Mat delta(m, T);
  std::vector<std::vector<size_t>> back(m, std::vector<size_t>(T, 0));
  for (size_t t = 0; t < T; ++t) delta(0, t) = unaries(0, t);
  for (size_t i = 1; i < m; ++i)
    for (size_t t = 0; t < T; ++t) {
      size_t best_s = 0;
      double best = delta(i - 1, 0) + pairwise(0, t);
      for (size_t s = 1; s < T; ++s) {
        double score = delta(i - 1, s) + pairwise(s, t);
        if (score > best) {  // strict: ties keep the lowest s
          best = score;
          best_s = s;
        }
      }
      delta(i, t) = unaries(i, t) + best;
      back[i][t] = best_s;
    }

  size_t best_t = 0;
  for (size_t t = 1; t < T; ++t)
    if (delta(m - 1, t) > delta(m - 1, best_t)) best_t = t;

  std::vector<TypeId> seq(m);
  seq[m - 1] = static_cast<TypeId>(best_t);
  for (size_t i = m - 1; i-- > 0;) {
    best_t = back[i + 1][best_t];
    seq[i] = static_cast<TypeId>(best_t);
  }
  return seq;
}

Marginals marginals(const Mat& unaries, const Mat& pairwise) {
  check_dims(unaries, pairwise);
  const size_t m = unaries.rows, T = unaries.cols;
  Mat alpha = forward_messages(unaries, pairwise);
  Mat beta = backward_messages(unaries, pairwise);
  const double log_z = logsumexp(alpha.row(m - 1), T);

  Marginals out;
  out.node = Mat(m, T);
  for (size_t i = 0; i < m; ++i)
    for (size_t t = 0; t < T; ++t) out.node(i, t) = std::exp(alpha(i, t) + beta(i, t) - log_z);

  out.edge.reserve(m > 0 ? m - 1 : 0);
  for (size_t i = 0; i + 1 < m; ++i) {
    Mat e(T, T);
    for (size_t s = 0; s < T; ++s)
      for (size_t t = 0; t < T; ++t)
        e(s, t) = std::exp(alpha(i, s) + pairwise(s, t) + unaries(i + 1, t) + beta(i + 1, t) - log_z);
    out.edge.push_back(std::move(e));
  }
  return out;
}

std::pair<double, Mat> nll_and_gradient(const std::vector<CrfBatchItem>& batch, const Mat& pairwise) {
  if (batch.empty()) throw std::invalid_argument("nll_and_gradient: empty batch");
  const size_t T = pairwise.rows;
  Mat grad(T, T, 0.0);
  double nll = 0.0;

  for (const CrfBatchItem& item : batch) {
    const Mat& u = *item.unaries;
    check_dims(u, pairwise);
    if (item.gold.size() != u.rows)
      throw std::invalid_argument("nll_and_gradient: gold length does not match column count");
    for (TypeId t : item.gold)
      if (t < 0 || static_cast<size_t>(t) >= T)
        throw std::invalid_argument("nll_and_gradient: gold label outside the vocabulary");

    double gold_score = 0.0;
    for (size_t i = 0; i < u.rows; ++i) gold_score += u(i, static_cast<size_t>(item.gold[i]));
    for (size_t i = 0; i + 1 < u.rows; ++i)
      gold_score += pairwise(static_cast<size_t>(item.gold[i]), static_cast<size_t>(item.gold[i + 1]));

    Marginals marg = marginals(u, pairwise);
    double log_z = log_partition(u, pairwise);
    nll += log_z - gold_score;

    for (size_t i = 0; i + 1 < u.rows; ++i) {
      const Mat& e = marg.edge[i];
      for (size_t s = 0; s < T; ++s)
        for (size_t t = 0; t < T; ++t) grad(s, t) += e(s, t);
      grad(static_cast<size_t>(item.gold[i]), static_cast<size_t>(item.gold[i + 1])) -= 1.0;
    }
  }

  const double inv_b = 1.0 / static_cast<double>(batch.size());
  for (double& g : grad.data) g *= inv_b;
  return {nll * inv_b, grad};
}

Mat init_pairwise_from_cooccurrence(const CooccurrenceMatrix& counts, double scale) {
  const size_t T = counts.type_count;
  Mat p(T, T);
  for (size_t i = 0; i < T; ++i)
    for (size_t j = 0; j < T; ++j)
      p(i, j) = scale * std::log1p(static_cast<double>(counts.at(i, j)));
  return p;
}

CrfTrainResult train_crf(CrfModel& model, const std::vector<CrfBatchItem>& corpus,
                         const CrfTrainConfig& config) {
  if (corpus.empty()) throw std::invalid_argument("train_crf: empty corpus");
  if (config.epochs < 1 || config.batch_tables < 1)
    throw std::invalid_argument("train_crf: epochs and batch_tables must be >= 1");
  if (model.pairwise.rows != model.pairwise.cols ||
      model.pairwise.rows != static_cast<size_t>(model.type_count))
    throw std::invalid_argument("train_crf: pairwise matrix dimension mismatch");

  const size_t n = model.pairwise.data.size();
  std::vector<double> m_state(n, 0.0), v_state(n, 0.0);
  const double b1 = 0.9, b2 = 0.999, eps = 1e-8;
  int64_t t = 0;

  Rng rng(config.seed);
  std::vector<size_t> order(corpus.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;

  CrfTrainResult result;
  result.epoch_nll.reserve(static_cast<size_t>(config.epochs));

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    rng.shuffle(order);
    double epoch_nll = 0.0;

    for (size_t start = 0; start < order.size(); start += static_cast<size_t>(config.batch_tables)) {
      const size_t end = std::min(order.size(), start + static_cast<size_t>(config.batch_tables));
      std::vector<CrfBatchItem> batch;
      batch.reserve(end - start);
      for (size_t i = start; i < end; ++i) batch.push_back(corpus[order[i]]);

      auto [nll, grad] = nll_and_gradient(batch, model.pairwise);
      if (!std::isfinite(nll))
        throw std::runtime_error("CRF training loss became non-finite at epoch " +
                                 std::to_string(epoch));
      epoch_nll += nll * static_cast<double>(batch.size());

      ++t;
      const double bc1 = 1.0 - std::pow(b1, static_cast<double>(t));
      const double bc2 = 1.0 - std::pow(b2, static_cast<double>(t));
      for (size_t i = 0; i < n; ++i) {
        m_state[i] = b1 * m_state[i] + (1.0 - b1) * grad.data[i];
        v_state[i] = b2 * v_state[i] + (1.0 - b2) * grad.data[i] * grad.data[i];
        double mhat = m_state[i] / bc1;
        double vhat = v_state[i] / bc2;
        model.pairwise.data[i] -= config.learning_rate * mhat / (std::sqrt(vhat) + eps);
      }
    }
    result.epoch_nll.push_back(epoch_nll / static_cast<double>(corpus.size()));
  }

  model.meta = {config.epochs, config.learning_rate, config.batch_tables, config.seed};
  return result;
}

namespace {

void check_brute_force_size(const Mat& unaries) {
  double combos = std::pow(static_cast<double>(unaries.cols), static_cast<double>(unaries.rows));
  if (combos > 1e6) throw std::invalid_argument("brute force instance too large");
}

double sequence_score(const Mat& u, const Mat& p, const std::vector<size_t>& seq) {
  double score = 0.0;
  for (size_t i = 0; i < seq.size(); ++i) score += u(i, seq[i]);
  for (size_t i = 0; i + 1 < seq.size(); ++i) score += p(seq[i], seq[i + 1]);
  return score;
}

}  // namespace

std::vector<TypeId> brute_force_decode(const Mat& unaries, const Mat& pairwise) {
  check_dims(unaries, pairwise);
  check_brute_force_size(unaries);
  const size_t m = unaries.rows, T = unaries.cols;
  size_t total = 1;
  for (size_t i = 0; i < m; ++i) total *= T;

  // Enumeration index n makes t_0 the fastest-varying digit; with strictly
  // greater replacement, the winner among ties is the sequence minimizing
  // (t_{m-1}, ..., t_0) lexicographically, matching Viterbi's backtrack rule.
  std::vector<size_t> seq(m), best_seq(m);
  double best = -HUGE_VAL;
  for (size_t n = 0; n < total; ++n) {
    size_t x = n;
    for (size_t i = 0; i < m; ++i) {
      seq[i] = x % T;
      x /= T;
    }
    double score = sequence_score(unaries, pairwise, seq);
    if (score > best) {
      best = score;
      best_seq = seq;
    }
  }
  std::vector<TypeId> out(m);
  for (size_t i = 0; i < m; ++i) out[i] = static_cast<TypeId>(best_seq[i]);
  return out;
}

double brute_force_partition(const Mat& unaries, const Mat& pairwise) {
  check_dims(unaries, pairwise);
  check_brute_force_size(unaries);
  const size_t m = unaries.rows, T = unaries.cols;
  size_t total = 1;
  for (size_t i = 0; i < m; ++i) total *= T;

  std::vector<double> scores;
  scores.reserve(total);
  std::vector<size_t> seq(m);
  for (size_t n = 0; n < total; ++n) {
    size_t x = n;
    for (size_t i = 0; i < m; ++i) {
      seq[i] = x % T;
      x /= T;
    }
    scores.push_back(sequence_score(unaries, pairwise, seq));
  }
  return logsumexp(scores.data(), scores.size());
}

}  // namespace tabsense
