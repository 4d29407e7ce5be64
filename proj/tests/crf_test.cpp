#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "tabsense/corpus.hpp"
#include "tabsense/crf.hpp"
#include "tabsense/neural.hpp"
#include "tabsense/rng.hpp"

using namespace tabsense;

namespace {

Mat random_mat(size_t rows, size_t cols, Rng& rng, double lo, double hi) {
  Mat m(rows, cols);
  for (double& v : m.data) v = rng.uniform(lo, hi);
  return m;
}

double row_logsumexp(const Mat& m, size_t r) {
  double mx = m(r, 0);
  for (size_t j = 1; j < m.cols; ++j) mx = std::max(mx, m(r, j));
  double s = 0.0;
  for (size_t j = 0; j < m.cols; ++j) s += std::exp(m(r, j) - mx);
  return mx + std::log(s);
}

}  // namespace

TEST_CASE("log_partition and map_decode match brute force on random instances") {
  Rng rng(101);
  for (int trial = 0; trial < 60; ++trial) {
    size_t m = 1 + rng.below(4);
    size_t T = 2 + rng.below(4);
    Mat u = random_mat(m, T, rng, -5.0, 5.0);
    Mat p = random_mat(T, T, rng, -5.0, 5.0);

    double lz = log_partition(u, p);
    double lz_bf = brute_force_partition(u, p);
    CHECK(std::fabs(lz - lz_bf) <= 1e-10 * std::max(1.0, std::fabs(lz_bf)));

    CHECK(map_decode(u, p) == brute_force_decode(u, p));
  }
}

TEST_CASE("map_decode breaks ties exactly like the brute-force oracle") {
  // Integer-valued potentials from a tiny set force exact score ties.
  Rng rng(202);
  int tied_instances = 0;
  for (int trial = 0; trial < 200; ++trial) {
    size_t m = 2 + rng.below(3);
    size_t T = 2 + rng.below(3);
    Mat u(m, T);
    Mat p(T, T);
    for (double& v : u.data) v = static_cast<double>(rng.below(2));
    for (double& v : p.data) v = static_cast<double>(rng.below(2));

    std::vector<TypeId> viterbi = map_decode(u, p);
    std::vector<TypeId> oracle = brute_force_decode(u, p);
    CHECK(viterbi == oracle);

    // Count instances where another sequence matches the winning score, so
    // this test demonstrably exercises the tie-break rule.
    double best = 0.0;
    for (size_t i = 0; i < m; ++i) best += u(i, static_cast<size_t>(oracle[i]));
    for (size_t i = 0; i + 1 < m; ++i)
      best += p(static_cast<size_t>(oracle[i]), static_cast<size_t>(oracle[i + 1]));
    size_t total = 1, at_best = 0;
    for (size_t i = 0; i < m; ++i) total *= T;
    for (size_t n = 0; n < total; ++n) {
      size_t x = n;
      double score = 0.0;
      size_t prev = 0;
      for (size_t i = 0; i < m; ++i) {
        size_t d = x % T;
        x /= T;
        score += u(i, d);
        if (i > 0) score += p(prev, d);
        prev = d;
      }
      if (score == best) ++at_best;
    }
    if (at_best > 1) ++tied_instances;
  }
  CHECK(tied_instances > 50);

  // All-zero potentials: every sequence ties; the lowest-index path wins.
  Mat u0(3, 4, 0.0), p0(4, 4, 0.0);
  std::vector<TypeId> all_zero{0, 0, 0};
  CHECK(map_decode(u0, p0) == all_zero);
  CHECK(brute_force_decode(u0, p0) == all_zero);
}

TEST_CASE("marginals normalize and agree with brute-force enumeration") {
  Rng rng(303);
  const size_t m = 3, T = 3;
  Mat u = random_mat(m, T, rng, -2.0, 2.0);
  Mat p = random_mat(T, T, rng, -2.0, 2.0);

  Marginals marg = marginals(u, p);
  REQUIRE(marg.node.rows == m);
  REQUIRE(marg.edge.size() == m - 1);

  for (size_t i = 0; i < m; ++i) {
    double sum = 0.0;
    for (size_t t = 0; t < T; ++t) {
      CHECK(marg.node(i, t) >= 0.0);
      sum += marg.node(i, t);
    }
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
  }

  // Edge marginals are joint distributions consistent with the node ones.
  for (size_t i = 0; i + 1 < m; ++i) {
    double total = 0.0;
    for (size_t s = 0; s < T; ++s) {
      double row_sum = 0.0;
      for (size_t t = 0; t < T; ++t) {
        total += marg.edge[i](s, t);
        row_sum += marg.edge[i](s, t);
      }
      CHECK(row_sum == doctest::Approx(marg.node(i, s)).epsilon(1e-10));
    }
    CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
    for (size_t t = 0; t < T; ++t) {
      double col_sum = 0.0;
      for (size_t s = 0; s < T; ++s) col_sum += marg.edge[i](s, t);
      CHECK(col_sum == doctest::Approx(marg.node(i + 1, t)).epsilon(1e-10));
    }
  }

  // Independent oracle: enumerate all T^m sequences with their probabilities.
  double log_z = brute_force_partition(u, p);
  Mat node_oracle(m, T, 0.0);
  Mat edge0_oracle(T, T, 0.0);
  size_t total_seqs = 1;
  for (size_t i = 0; i < m; ++i) total_seqs *= T;
  for (size_t n = 0; n < total_seqs; ++n) {
    size_t x = n;
    std::vector<size_t> seq(m);
    for (size_t i = 0; i < m; ++i) {
      seq[i] = x % T;
      x /= T;
    }
    double score = 0.0;
    for (size_t i = 0; i < m; ++i) score += u(i, seq[i]);
    for (size_t i = 0; i + 1 < m; ++i) score += p(seq[i], seq[i + 1]);
    double prob = std::exp(score - log_z);
    for (size_t i = 0; i < m; ++i) node_oracle(i, seq[i]) += prob;
    edge0_oracle(seq[0], seq[1]) += prob;
  }
  for (size_t i = 0; i < m; ++i)
    for (size_t t = 0; t < T; ++t)
      CHECK(marg.node(i, t) == doctest::Approx(node_oracle(i, t)).epsilon(1e-10));
  for (size_t s = 0; s < T; ++s)
    for (size_t t = 0; t < T; ++t)
      CHECK(marg.edge[0](s, t) == doctest::Approx(edge0_oracle(s, t)).epsilon(1e-10));
}

TEST_CASE("nll gradient is edge marginals minus gold indicators") {
  Rng rng(404);
  const size_t T = 3;
  Mat u = random_mat(2, T, rng, -1.0, 1.0);
  Mat p = random_mat(T, T, rng, -1.0, 1.0);
  std::vector<TypeId> gold{1, 2};

  std::vector<CrfBatchItem> batch{{&u, gold}};
  auto [nll, grad] = nll_and_gradient(batch, p);

  Marginals marg = marginals(u, p);
  for (size_t s = 0; s < T; ++s)
    for (size_t t = 0; t < T; ++t) {
      double expected = marg.edge[0](s, t) - (s == 1 && t == 2 ? 1.0 : 0.0);
      CHECK(grad(s, t) == doctest::Approx(expected).epsilon(1e-12));
    }

  double gold_score = u(0, 1) + u(1, 2) + p(1, 2);
  CHECK(nll == doctest::Approx(log_partition(u, p) - gold_score).epsilon(1e-12));
}

TEST_CASE("nll gradient matches central finite differences") {
  Rng rng(505);
  const size_t T = 4;
  Mat u1 = random_mat(3, T, rng, -2.0, 2.0);
  Mat u2 = random_mat(2, T, rng, -2.0, 2.0);
  std::vector<TypeId> g1{0, 2, 1};
  std::vector<TypeId> g2{3, 3};
  std::vector<CrfBatchItem> batch{{&u1, g1}, {&u2, g2}};
  Mat p = random_mat(T, T, rng, -1.0, 1.0);

  auto [nll, grad] = nll_and_gradient(batch, p);
  CHECK(std::isfinite(nll));

  const double h = 1e-5;
  for (size_t s = 0; s < T; ++s)
    for (size_t t = 0; t < T; ++t) {
      double orig = p(s, t);
      p(s, t) = orig + h;
      double lp = nll_and_gradient(batch, p).first;
      p(s, t) = orig - h;
      double lm = nll_and_gradient(batch, p).first;
      p(s, t) = orig;
      double numeric = (lp - lm) / (2 * h);
      CHECK(std::fabs(grad(s, t) - numeric) < 1e-6);
    }
}

TEST_CASE("shifting a unary row shifts the partition and nothing else") {
  Rng rng(606);
  const size_t m = 3, T = 3;
  Mat u = random_mat(m, T, rng, -3.0, 3.0);
  Mat p = random_mat(T, T, rng, -3.0, 3.0);

  Mat shifted = u;
  const double c = 7.25;
  for (size_t t = 0; t < T; ++t) shifted(1, t) += c;

  CHECK(log_partition(shifted, p) == doctest::Approx(log_partition(u, p) + c).epsilon(1e-12));
  CHECK(map_decode(shifted, p) == map_decode(u, p));

  Marginals a = marginals(u, p);
  Marginals b = marginals(shifted, p);
  for (size_t i = 0; i < m; ++i)
    for (size_t t = 0; t < T; ++t)
      CHECK(b.node(i, t) == doctest::Approx(a.node(i, t)).epsilon(1e-12));
}

TEST_CASE("zero pairwise decouples columns") {
  Rng rng(707);
  const size_t m = 4, T = 3;
  Mat u = random_mat(m, T, rng, -2.0, 2.0);
  Mat p(T, T, 0.0);

  // Partition factorizes into per-row logsumexp.
  double expected_lz = 0.0;
  for (size_t i = 0; i < m; ++i) expected_lz += row_logsumexp(u, i);
  CHECK(log_partition(u, p) == doctest::Approx(expected_lz).epsilon(1e-12));

  // Node marginals reduce to per-row softmax; decode to per-row argmax.
  Marginals marg = marginals(u, p);
  std::vector<TypeId> seq = map_decode(u, p);
  for (size_t i = 0; i < m; ++i) {
    double lse = row_logsumexp(u, i);
    size_t best = 0;
    for (size_t t = 0; t < T; ++t) {
      CHECK(marg.node(i, t) == doctest::Approx(std::exp(u(i, t) - lse)).epsilon(1e-12));
      if (u(i, t) > u(i, best)) best = t;
    }
    CHECK(seq[i] == static_cast<TypeId>(best));
  }
}

TEST_CASE("extreme potentials stay finite in log space") {
  Mat u(3, 3);
  u(0, 0) = 1e4;
  u(0, 1) = 0.0;
  u(0, 2) = -1e4;
  u(1, 0) = -1e4;
  u(1, 1) = 1e4;
  u(1, 2) = 0.0;
  u(2, 0) = 0.0;
  u(2, 1) = -1e4;
  u(2, 2) = 1e4;
  Mat p(3, 3, 0.0);
  p(0, 1) = 1e4;
  p(1, 2) = -1e4;

  double lz = log_partition(u, p);
  CHECK(std::isfinite(lz));
  CHECK(lz == doctest::Approx(brute_force_partition(u, p)).epsilon(1e-12));

  Marginals marg = marginals(u, p);
  for (double v : marg.node.data) {
    CHECK(std::isfinite(v));
    CHECK(v >= 0.0);
    CHECK(v <= 1.0 + 1e-12);
  }
  CHECK(map_decode(u, p) == brute_force_decode(u, p));
}

TEST_CASE("single-column chains have no edge terms") {
  Mat u(1, 4);
  u(0, 0) = 0.5;
  u(0, 1) = 2.0;
  u(0, 2) = -1.0;
  u(0, 3) = 2.0;
  Mat p(4, 4, 3.0);  // must not leak into a chain with no edges

  CHECK(log_partition(u, p) == doctest::Approx(row_logsumexp(u, 0)).epsilon(1e-12));
  std::vector<TypeId> seq = map_decode(u, p);
  REQUIRE(seq.size() == 1);
  CHECK(seq[0] == 1);  // tie with index 3 resolves to the lower index

  Marginals marg = marginals(u, p);
  CHECK(marg.edge.empty());

  std::vector<TypeId> gold{1};
  std::vector<CrfBatchItem> batch{{&u, gold}};
  auto [nll, grad] = nll_and_gradient(batch, p);
  CHECK(std::isfinite(nll));
  for (double g : grad.data) CHECK(g == 0.0);
}

TEST_CASE("dimension and input validation") {
  Mat u(2, 3, 0.0);
  Mat p_bad(2, 3, 0.0);
  CHECK_THROWS_AS(log_partition(u, p_bad), std::invalid_argument);
  Mat p_wrong(4, 4, 0.0);
  CHECK_THROWS_AS(map_decode(u, p_wrong), std::invalid_argument);

  Mat p(3, 3, 0.0);
  std::vector<CrfBatchItem> empty;
  CHECK_THROWS_AS(nll_and_gradient(empty, p), std::invalid_argument);

  std::vector<TypeId> short_gold{0};
  std::vector<CrfBatchItem> mismatch{{&u, short_gold}};
  CHECK_THROWS_AS(nll_and_gradient(mismatch, p), std::invalid_argument);

  std::vector<TypeId> oob{0, 5};
  std::vector<CrfBatchItem> out_of_range{{&u, oob}};
  CHECK_THROWS_AS(nll_and_gradient(out_of_range, p), std::invalid_argument);

  // Brute force refuses instances beyond the enumeration budget.
  Mat huge(8, 10, 0.0);
  Mat p10(10, 10, 0.0);
  CHECK_THROWS_AS(brute_force_decode(huge, p10), std::invalid_argument);
  CHECK_THROWS_AS(brute_force_partition(huge, p10), std::invalid_argument);
}

TEST_CASE("gold_sequence extracts labels and rejects unlabeled columns") {
  Table t;
  t.id = "t1";
  t.columns.resize(3);
  t.columns[0].label = 2;
  t.columns[1].label = 0;
  t.columns[2].label = 1;
  CHECK(gold_sequence(t) == std::vector<TypeId>{2, 0, 1});

  t.columns[1].label.reset();
  CHECK_THROWS_WITH_AS(static_cast<void>(gold_sequence(t)), doctest::Contains("t1"),
                       std::invalid_argument);
}

TEST_CASE("unaries_from_classifier emits log-probability rows") {
  NetworkConfig cfg;
  cfg.d_char = 4;
  cfg.d_word = 4;
  cfg.d_para = 4;
  cfg.subnet_hidden = 5;
  cfg.subnet_out = 3;
  cfg.primary_hidden = 6;
  cfg.dropout_rate = 0.0;
  cfg.use_topic = false;
  cfg.type_count = 3;
  cfg.seed = 11;
  ClassifierModel model = init_network(cfg);

  Rng rng(88);
  std::vector<ColumnFeatures> cols(2);
  for (ColumnFeatures& f : cols) {
    auto fill = [&](std::vector<double>& v, size_t n) {
      v.resize(n);
      for (double& x : v) x = rng.uniform(-1.0, 1.0);
    };
    fill(f.char_v, 4);
    fill(f.word_v, 4);
    fill(f.para_v, 4);
    fill(f.stat_v, kStatDim);
  }

  Mat u = unaries_from_classifier(model, cols, nullptr);
  REQUIRE(u.rows == 2);
  REQUIRE(u.cols == 3);
  for (size_t i = 0; i < 2; ++i) {
    std::vector<double> probs = forward(model, cols[i], nullptr, Mode::kEval);
    double sum = 0.0;
    for (size_t t = 0; t < 3; ++t) {
      CHECK(u(i, t) == doctest::Approx(std::log(probs[t])).epsilon(1e-12));
      sum += std::exp(u(i, t));
    }
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-10));
  }

  std::vector<ColumnFeatures> none;
  CHECK_THROWS_AS(unaries_from_classifier(model, none, nullptr), std::invalid_argument);
}

TEST_CASE("pairwise initialization is a scaled log1p of co-occurrence counts") {
  CooccurrenceMatrix counts(3);
  counts.at(0, 1) = 2;
  counts.at(1, 0) = 2;
  counts.at(2, 2) = 5;

  Mat p = init_pairwise_from_cooccurrence(counts, 0.1);
  CHECK(p(0, 1) == doctest::Approx(0.1 * std::log1p(2.0)));
  CHECK(p(1, 0) == doctest::Approx(0.1 * std::log1p(2.0)));
  CHECK(p(2, 2) == doctest::Approx(0.1 * std::log1p(5.0)));
  CHECK(p(0, 0) == 0.0);
  CHECK(p(1, 2) == 0.0);
}

TEST_CASE("training separates frequently adjacent type pairs") {
  // Two table templates: gold [0,1] and [2,3]. The trained pairwise weight
  // must prefer 1 over 2 as the successor of 0 by a clear margin.
  const size_t T = 4;
  Rng rng(909);
  std::vector<Mat> unary_store;
  unary_store.reserve(40);
  std::vector<std::vector<TypeId>> golds;
  for (int i = 0; i < 40; ++i) {
    std::vector<TypeId> gold = (i % 2 == 0) ? std::vector<TypeId>{0, 1} : std::vector<TypeId>{2, 3};
    Mat logits(2, T);
    for (size_t r = 0; r < 2; ++r)
      for (size_t t = 0; t < T; ++t) {
        logits(r, t) = rng.uniform(-0.1, 0.1);
        if (static_cast<TypeId>(t) == gold[r]) logits(r, t) += 1.5;
      }
    unary_store.push_back(nn::log_softmax_rows(logits));
    golds.push_back(std::move(gold));
  }
  std::vector<CrfBatchItem> corpus;
  for (size_t i = 0; i < unary_store.size(); ++i) corpus.push_back({&unary_store[i], golds[i]});

  CooccurrenceMatrix counts(T);
  counts.at(0, 1) = 20;
  counts.at(1, 0) = 20;
  counts.at(2, 3) = 20;
  counts.at(3, 2) = 20;

  CrfModel model;
  model.type_count = static_cast<TypeId>(T);
  model.pairwise = init_pairwise_from_cooccurrence(counts, 0.1);

  CrfTrainConfig cfg;
  cfg.epochs = 15;
  cfg.learning_rate = 1e-2;
  cfg.batch_tables = 10;
  cfg.seed = 77;
  CrfTrainResult res = train_crf(model, corpus, cfg);

  REQUIRE(res.epoch_nll.size() == 15);
  CHECK(res.epoch_nll.back() < res.epoch_nll.front());
  CHECK(model.pairwise(0, 1) - model.pairwise(0, 2) > 1.0);
  CHECK(model.pairwise(2, 3) - model.pairwise(2, 0) > 1.0);
  CHECK(model.meta.epochs == 15);
  CHECK(model.meta.seed == 77);

  // Same seed reproduces the trained weights bit for bit.
  CrfModel again;
  again.type_count = static_cast<TypeId>(T);
  again.pairwise = init_pairwise_from_cooccurrence(counts, 0.1);
  train_crf(again, corpus, cfg);
  CHECK(again.pairwise.data == model.pairwise.data);
}

TEST_CASE("train_crf validates its inputs") {
  CrfModel model;
  model.type_count = 3;
  model.pairwise = Mat(3, 3, 0.0);
  CrfTrainConfig cfg;

  std::vector<CrfBatchItem> empty;
  CHECK_THROWS_AS(train_crf(model, empty, cfg), std::invalid_argument);

  Mat u(2, 3, 0.0);
  std::vector<TypeId> gold{0, 1};
  std::vector<CrfBatchItem> corpus{{&u, gold}};
  cfg.epochs = 0;
  CHECK_THROWS_AS(train_crf(model, corpus, cfg), std::invalid_argument);
  cfg = CrfTrainConfig{};
  cfg.batch_tables = 0;
  CHECK_THROWS_AS(train_crf(model, corpus, cfg), std::invalid_argument);

  CrfModel bad;
  bad.type_count = 3;
  bad.pairwise = Mat(2, 2, 0.0);
  cfg = CrfTrainConfig{};
  CHECK_THROWS_AS(train_crf(bad, corpus, cfg), std::invalid_argument);
}
