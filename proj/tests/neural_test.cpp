#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "tabsense/neural.hpp"
#include "tabsense/rng.hpp"

using namespace tabsense;

namespace {

double rel_err(double a, double b) {
  return std::fabs(a - b) / std::max(1e-8, std::fabs(a) + std::fabs(b));
}

Mat random_mat(size_t rows, size_t cols, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Mat m(rows, cols);
  for (double& v : m.data) v = rng.uniform(lo, hi);
  return m;
}

Dense random_dense(size_t out_dim, size_t in_dim, Rng& rng) {
  Dense d;
  d.w = random_mat(out_dim, in_dim, rng);
  d.b.resize(out_dim);
  for (double& v : d.b) v = rng.uniform(-0.5, 0.5);
  return d;
}

// Scalar objective sum(y .* r) so dy = r; drives finite-difference checks.
double weighted_sum(const Mat& y, const Mat& r) {
  double s = 0.0;
  for (size_t i = 0; i < y.data.size(); ++i) s += y.data[i] * r.data[i];
  return s;
}

NetworkConfig tiny_config(bool use_topic, uint64_t seed) {
  NetworkConfig cfg;
  cfg.d_char = 4;
  cfg.d_word = 5;
  cfg.d_para = 3;
  cfg.d_topic = use_topic ? 3 : 0;
  cfg.subnet_hidden = 6;
  cfg.subnet_out = 4;
  cfg.primary_hidden = 7;
  cfg.dropout_rate = 0.0;
  cfg.use_topic = use_topic;
  cfg.type_count = 3;
  cfg.seed = seed;
  return cfg;
}

ColumnFeatures random_features(const NetworkConfig& cfg, uint64_t seed) {
  Rng rng(seed);
  ColumnFeatures f;
  auto fill = [&](std::vector<double>& v, size_t n) {
    v.resize(n);
    for (double& x : v) x = rng.uniform(-1.0, 1.0);
  };
  fill(f.char_v, static_cast<size_t>(cfg.d_char));
  fill(f.word_v, static_cast<size_t>(cfg.d_word));
  fill(f.para_v, static_cast<size_t>(cfg.d_para));
  fill(f.stat_v, kStatDim);
  return f;
}

TopicVector random_topic(int k, uint64_t seed) {
  Rng rng(seed);
  TopicVector t;
  t.theta.resize(static_cast<size_t>(k));
  double sum = 0.0;
  for (double& v : t.theta) {
    v = rng.uniform01() + 1e-3;
    sum += v;
  }
  for (double& v : t.theta) v /= sum;
  return t;
}

std::vector<double> flat_params(ClassifierModel& m) {
  std::vector<double> out;
  for (const ParamRef& r : param_refs(m))
    out.insert(out.end(), r.values->begin(), r.values->end());
  return out;
}

std::vector<double> flat_state(ClassifierModel& m) {
  std::vector<double> out;
  for (const ParamRef& r : state_refs(m))
    out.insert(out.end(), r.values->begin(), r.values->end());
  return out;
}

}  // namespace

TEST_CASE("dense_forward matches a hand-computed example") {
  Dense d;
  d.w = Mat(3, 2);
  d.w(0, 0) = 1;
  d.w(0, 1) = 2;
  d.w(1, 0) = 3;
  d.w(1, 1) = 4;
  d.w(2, 0) = 5;
  d.w(2, 1) = 6;
  d.b = {0.5, -1.0, 0.0};

  Mat x(2, 2);
  x(0, 0) = 1;
  x(0, 1) = 1;
  x(1, 0) = 2;
  x(1, 1) = -1;

  Mat y = nn::dense_forward(x, d);
  REQUIRE(y.rows == 2);
  REQUIRE(y.cols == 3);
  CHECK(y(0, 0) == doctest::Approx(3.5));
  CHECK(y(0, 1) == doctest::Approx(6.0));
  CHECK(y(0, 2) == doctest::Approx(11.0));
  CHECK(y(1, 0) == doctest::Approx(0.5));
  CHECK(y(1, 1) == doctest::Approx(1.0));
  CHECK(y(1, 2) == doctest::Approx(4.0));

  Mat bad(1, 3);
  CHECK_THROWS_AS(nn::dense_forward(bad, d), std::invalid_argument);
}

TEST_CASE("dense_backward agrees with central differences") {
  Rng rng(11);
  const size_t in_dim = 3, out_dim = 2, batch = 2;
  Dense d = random_dense(out_dim, in_dim, rng);
  Mat x = random_mat(batch, in_dim, rng);
  Mat r = random_mat(batch, out_dim, rng);

  Mat dx, dw(out_dim, in_dim);
  std::vector<double> db(out_dim, 0.0);
  nn::dense_backward(x, d, r, &dx, &dw, &db);

  const double h = 1e-6;
  auto loss = [&]() { return weighted_sum(nn::dense_forward(x, d), r); };

  for (size_t o = 0; o < out_dim; ++o)
    for (size_t i = 0; i < in_dim; ++i) {
      double orig = d.w(o, i);
      d.w(o, i) = orig + h;
      double lp = loss();
      d.w(o, i) = orig - h;
      double lm = loss();
      d.w(o, i) = orig;
      CHECK(rel_err(dw(o, i), (lp - lm) / (2 * h)) < 1e-7);
    }
  for (size_t o = 0; o < out_dim; ++o) {
    double orig = d.b[o];
    d.b[o] = orig + h;
    double lp = loss();
    d.b[o] = orig - h;
    double lm = loss();
    d.b[o] = orig;
    CHECK(rel_err(db[o], (lp - lm) / (2 * h)) < 1e-7);
  }
  for (size_t b = 0; b < batch; ++b)
    for (size_t i = 0; i < in_dim; ++i) {
      double orig = x(b, i);
      x(b, i) = orig + h;
      double lp = loss();
      x(b, i) = orig - h;
      double lm = loss();
      x(b, i) = orig;
      CHECK(rel_err(dx(b, i), (lp - lm) / (2 * h)) < 1e-7);
    }
}

TEST_CASE("dense_backward accumulates dw and db but overwrites dx") {
  Rng rng(12);
  Dense d = random_dense(2, 3, rng);
  Mat x = random_mat(2, 3, rng);
  Mat dy = random_mat(2, 2, rng);

  Mat dx1, dw1(2, 3);
  std::vector<double> db1(2, 0.0);
  nn::dense_backward(x, d, dy, &dx1, &dw1, &db1);

  Mat dx2, dw2(2, 3);
  std::vector<double> db2(2, 0.0);
  nn::dense_backward(x, d, dy, &dx2, &dw2, &db2);
  nn::dense_backward(x, d, dy, &dx2, &dw2, &db2);

  for (size_t i = 0; i < dw1.data.size(); ++i)
    CHECK(dw2.data[i] == doctest::Approx(2.0 * dw1.data[i]));
  for (size_t o = 0; o < db1.size(); ++o) CHECK(db2[o] == doctest::Approx(2.0 * db1[o]));
  for (size_t i = 0; i < dx1.data.size(); ++i) CHECK(dx2.data[i] == doctest::Approx(dx1.data[i]));
}

TEST_CASE("softmax regression gradient matches the closed form") {
  // Single dense layer into softmax cross-entropy: the weight gradient must
  // equal sum_b (p - onehot)/B outer x, computed here with independent loops.
  Mat x(2, 3);
  x(0, 0) = 0.5;
  x(0, 1) = -1.0;
  x(0, 2) = 2.0;
  x(1, 0) = 1.0;
  x(1, 1) = 0.25;
  x(1, 2) = -0.5;

  Rng rng(21);
  Dense d = random_dense(3, 3, rng);
  std::vector<TypeId> labels{2, 0};

  Mat logits = nn::dense_forward(x, d);
  Mat dlogits;
  nn::softmax_cross_entropy(logits, labels, nullptr, &dlogits);
  Mat dw(3, 3);
  std::vector<double> db(3, 0.0);
  nn::dense_backward(x, d, dlogits, nullptr, &dw, &db);

  // Oracle: recompute probabilities with plain loops.
  for (size_t o = 0; o < 3; ++o) {
    double dw_oracle[3] = {0, 0, 0};
    double db_oracle = 0.0;
    for (size_t b = 0; b < 2; ++b) {
      double z[3], mx = -1e300;
      for (size_t j = 0; j < 3; ++j) {
        z[j] = d.b[j];
        for (size_t i = 0; i < 3; ++i) z[j] += d.w(j, i) * x(b, i);
        mx = std::max(mx, z[j]);
      }
      double denom = 0.0;
      for (size_t j = 0; j < 3; ++j) denom += std::exp(z[j] - mx);
      double p = std::exp(z[o] - mx) / denom;
      double g = (p - (static_cast<size_t>(labels[b]) == o ? 1.0 : 0.0)) / 2.0;
      for (size_t i = 0; i < 3; ++i) dw_oracle[i] += g * x(b, i);
      db_oracle += g;
    }
    for (size_t i = 0; i < 3; ++i) CHECK(rel_err(dw(o, i), dw_oracle[i]) < 1e-12);
    CHECK(rel_err(db[o], db_oracle) < 1e-12);
  }
}

TEST_CASE("relu and relu_backward gate on the pre-activation sign") {
  Mat x(1, 4);
  x(0, 0) = -2.0;
  x(0, 1) = 0.0;
  x(0, 2) = 3.0;
  x(0, 3) = 1e-12;
  Mat y = nn::relu(x);
  CHECK(y(0, 0) == 0.0);
  CHECK(y(0, 1) == 0.0);
  CHECK(y(0, 2) == 3.0);
  CHECK(y(0, 3) == 1e-12);

  Mat dy(1, 4, 5.0);
  Mat dx = nn::relu_backward(x, dy);
  CHECK(dx(0, 0) == 0.0);
  CHECK(dx(0, 1) == 0.0);  // the kink itself passes nothing
  CHECK(dx(0, 2) == 5.0);
  CHECK(dx(0, 3) == 5.0);
}

TEST_CASE("batchnorm train forward matches hand-computed statistics") {
  BatchNorm bn;
  bn.gamma = {2.0};
  bn.beta = {0.5};
  bn.running_mean = {0.0};
  bn.running_var = {1.0};

  Mat x(2, 1);
  x(0, 0) = 1.0;
  x(1, 0) = 3.0;

  SUBCASE("batch statistics and affine output, population variance") {
    nn::BnCache cache;
    Mat y = nn::batchnorm_forward_train(x, bn, 0.1, 0.0, &cache, false);
    // mean 2, population var 1, xhat = {-1, +1}
    CHECK(y(0, 0) == doctest::Approx(-1.5));
    CHECK(y(1, 0) == doctest::Approx(2.5));
    CHECK(cache.xhat(0, 0) == doctest::Approx(-1.0));
    CHECK(cache.xhat(1, 0) == doctest::Approx(1.0));
    CHECK(cache.inv_std[0] == doctest::Approx(1.0));
    // update_running=false leaves the running estimates alone
    CHECK(bn.running_mean[0] == 0.0);
    CHECK(bn.running_var[0] == 1.0);
  }

  SUBCASE("running stats blend with momentum 0.1") {
    nn::batchnorm_forward_train(x, bn, 0.1, 0.0, nullptr, true);
    CHECK(bn.running_mean[0] == doctest::Approx(0.2));   // 0.9*0 + 0.1*2
    CHECK(bn.running_var[0] == doctest::Approx(1.0));    // 0.9*1 + 0.1*1
    nn::batchnorm_forward_train(x, bn, 0.1, 0.0, nullptr, true);
    CHECK(bn.running_mean[0] == doctest::Approx(0.38));  // 0.9*0.2 + 0.1*2
  }
}

TEST_CASE("batchnorm train backward agrees with central differences") {
  Rng rng(31);
  const size_t batch = 4, f = 3;
  Mat x = random_mat(batch, f, rng);
  Mat r = random_mat(batch, f, rng);
  BatchNorm bn;
  bn.gamma.resize(f);
  bn.beta.resize(f);
  for (double& v : bn.gamma) v = rng.uniform(0.5, 1.5);
  for (double& v : bn.beta) v = rng.uniform(-0.5, 0.5);
  bn.running_mean.assign(f, 0.0);
  bn.running_var.assign(f, 1.0);
  const double eps = 1e-5;

  nn::BnCache cache;
  nn::batchnorm_forward_train(x, bn, 0.1, eps, &cache, false);
  std::vector<double> dgamma(f, 0.0), dbeta(f, 0.0);
  Mat dx = nn::batchnorm_backward_train(r, bn, cache, &dgamma, &dbeta);

  const double h = 1e-5;
  auto loss = [&]() {
    BatchNorm tmp = bn;
    return weighted_sum(nn::batchnorm_forward_train(x, tmp, 0.1, eps, nullptr, false), r);
  };

  // dx accounts for the batch mean/variance depending on every x entry.
  for (size_t b = 0; b < batch; ++b)
    for (size_t j = 0; j < f; ++j) {
      double orig = x(b, j);
      x(b, j) = orig + h;
      double lp = loss();
      x(b, j) = orig - h;
      double lm = loss();
      x(b, j) = orig;
      CHECK(rel_err(dx(b, j), (lp - lm) / (2 * h)) < 1e-6);
    }
  for (size_t j = 0; j < f; ++j) {
    double orig = bn.gamma[j];
    bn.gamma[j] = orig + h;
    double lp = loss();
    bn.gamma[j] = orig - h;
    double lm = loss();
    bn.gamma[j] = orig;
    CHECK(rel_err(dgamma[j], (lp - lm) / (2 * h)) < 1e-6);

    orig = bn.beta[j];
    bn.beta[j] = orig + h;
    lp = loss();
    bn.beta[j] = orig - h;
    lm = loss();
    bn.beta[j] = orig;
    CHECK(rel_err(dbeta[j], (lp - lm) / (2 * h)) < 1e-6);
  }
}

TEST_CASE("batchnorm eval mode is a fixed affine map of the running stats") {
  BatchNorm bn;
  bn.gamma = {3.0, 1.0};
  bn.beta = {-1.0, 0.25};
  bn.running_mean = {2.0, -1.0};
  bn.running_var = {4.0, 0.0};
  const double eps = 1e-5;

  Mat x(2, 2);
  x(0, 0) = 4.0;
  x(0, 1) = -1.0;
  x(1, 0) = 0.0;
  x(1, 1) = 1.0;

  Mat y = nn::batchnorm_forward_eval(x, bn, eps);
  CHECK(y(0, 0) == doctest::Approx(3.0 * 2.0 / std::sqrt(4.0 + eps) - 1.0));
  CHECK(y(0, 1) == doctest::Approx(0.25));
  CHECK(y(1, 0) == doctest::Approx(3.0 * -2.0 / std::sqrt(4.0 + eps) - 1.0));
  CHECK(y(1, 1) == doctest::Approx(1.0 * 2.0 / std::sqrt(0.0 + eps) + 0.25));

  Mat dy(2, 2, 1.0);
  std::vector<double> dgamma(2, 0.0), dbeta(2, 0.0);
  Mat dx = nn::batchnorm_backward_eval(x, dy, bn, eps, &dgamma, &dbeta);
  CHECK(dx(0, 0) == doctest::Approx(3.0 / std::sqrt(4.0 + eps)));
  CHECK(dx(1, 1) == doctest::Approx(1.0 / std::sqrt(eps)));
  CHECK(dgamma[0] == doctest::Approx((4.0 - 2.0) / std::sqrt(4.0 + eps) +
                                     (0.0 - 2.0) / std::sqrt(4.0 + eps)));
  CHECK(dbeta[0] == doctest::Approx(2.0));
  CHECK(dbeta[1] == doctest::Approx(2.0));
}

TEST_CASE("log_softmax_rows is shift invariant and stable at extreme logits") {
  Mat a(1, 3);
  a(0, 0) = 0.3;
  a(0, 1) = -1.2;
  a(0, 2) = 2.0;
  Mat b = a;
  for (double& v : b.data) v += 100.0;

  Mat la = nn::log_softmax_rows(a);
  Mat lb = nn::log_softmax_rows(b);
  double sum = 0.0;
  for (size_t j = 0; j < 3; ++j) {
    CHECK(la(0, j) == doctest::Approx(lb(0, j)).epsilon(1e-12));
    sum += std::exp(la(0, j));
  }
  CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));

  Mat big(1, 2);
  big(0, 0) = 1e4;
  big(0, 1) = -1e4;
  Mat lbig = nn::log_softmax_rows(big);
  CHECK(std::isfinite(lbig(0, 0)));
  CHECK(std::isfinite(lbig(0, 1)));
  CHECK(lbig(0, 0) == doctest::Approx(0.0));
  CHECK(lbig(0, 1) == doctest::Approx(-2e4));
}

TEST_CASE("softmax_cross_entropy hand example with batch averaging") {
  Mat logits(2, 2);
  logits(0, 0) = 0.0;
  logits(0, 1) = 0.0;
  logits(1, 0) = std::log(3.0);
  logits(1, 1) = 0.0;
  std::vector<TypeId> labels{0, 1};

  Mat probs, dlogits;
  double loss = nn::softmax_cross_entropy(logits, labels, &probs, &dlogits);

  CHECK(probs(0, 0) == doctest::Approx(0.5));
  CHECK(probs(0, 1) == doctest::Approx(0.5));
  CHECK(probs(1, 0) == doctest::Approx(0.75));
  CHECK(probs(1, 1) == doctest::Approx(0.25));
  // row losses ln2 and ln4, averaged
  CHECK(loss == doctest::Approx((std::log(2.0) + std::log(4.0)) / 2.0));
  // dlogits carries the 1/B factor
  CHECK(dlogits(0, 0) == doctest::Approx((0.5 - 1.0) / 2.0));
  CHECK(dlogits(0, 1) == doctest::Approx(0.5 / 2.0));
  CHECK(dlogits(1, 0) == doctest::Approx(0.75 / 2.0));
  CHECK(dlogits(1, 1) == doctest::Approx((0.25 - 1.0) / 2.0));

  std::vector<TypeId> short_labels{0};
  CHECK_THROWS_AS(nn::softmax_cross_entropy(logits, short_labels, nullptr, nullptr),
                  std::invalid_argument);
}

TEST_CASE("init_network seeds weights in Glorot bounds with zeroed biases") {
  NetworkConfig cfg = tiny_config(false, 99);
  ClassifierModel m = init_network(cfg);

  auto refs = param_refs(m);
  CHECK(refs.size() == 22);  // 9 dense pairs + 2 batchnorm pairs

  std::vector<std::string> names;
  for (const ParamRef& r : refs) {
    names.push_back(r.name);
    bool is_weight = r.name.size() > 2 && r.name.substr(r.name.size() - 2) == ".w";
    CHECK(r.decay == is_weight);
    if (is_weight) {
      double bound = std::sqrt(6.0 / static_cast<double>(r.rows + r.cols));
      double max_abs = 0.0;
      for (double v : *r.values) max_abs = std::max(max_abs, std::fabs(v));
      CHECK(max_abs <= bound);
      CHECK(max_abs > 0.0);
    } else if (r.name.substr(r.name.size() - 2) == ".b") {
      for (double v : *r.values) CHECK(v == 0.0);
    }
  }
  std::sort(names.begin(), names.end());
  CHECK(std::adjacent_find(names.begin(), names.end()) == names.end());

  for (double v : m.bn1.gamma) CHECK(v == 1.0);
  for (double v : m.bn1.beta) CHECK(v == 0.0);
  for (double v : m.bn2.running_mean) CHECK(v == 0.0);
  for (double v : m.bn2.running_var) CHECK(v == 1.0);
  CHECK(state_refs(m).size() == 4);

  NetworkConfig tcfg = tiny_config(true, 99);
  ClassifierModel mt = init_network(tcfg);
  CHECK(param_refs(mt).size() == 26);  // adds the topic subnet pair

  ClassifierModel m2 = init_network(cfg);
  CHECK(flat_params(m) == flat_params(m2));
  NetworkConfig other = cfg;
  other.seed = 100;
  ClassifierModel m3 = init_network(other);
  CHECK(flat_params(m) != flat_params(m3));
}

TEST_CASE("network config validation rejects bad shapes") {
  NetworkConfig cfg = tiny_config(false, 1);
  cfg.type_count = 1;
  CHECK_THROWS_AS(init_network(cfg), std::invalid_argument);

  cfg = tiny_config(false, 1);
  cfg.dropout_rate = 1.0;
  CHECK_THROWS_AS(init_network(cfg), std::invalid_argument);

  cfg = tiny_config(true, 1);
  cfg.d_topic = 0;
  CHECK_THROWS_AS(init_network(cfg), std::invalid_argument);

  cfg = tiny_config(false, 1);
  cfg.d_char = 0;
  CHECK_THROWS_AS(init_network(cfg), std::invalid_argument);
}

TEST_CASE("forward yields a probability simplex and is deterministic in eval") {
  NetworkConfig cfg = tiny_config(false, 5);
  ClassifierModel m = init_network(cfg);
  ColumnFeatures f = random_features(cfg, 17);

  std::vector<double> p1 = forward(m, f, nullptr, Mode::kEval);
  std::vector<double> p2 = forward(m, f, nullptr, Mode::kEval);
  REQUIRE(p1.size() == 3);
  CHECK(p1 == p2);
  double sum = 0.0;
  for (double v : p1) {
    CHECK(v > 0.0);
    sum += v;
  }
  CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("forward enforces the topic wiring of the model") {
  NetworkConfig base_cfg = tiny_config(false, 5);
  ClassifierModel base = init_network(base_cfg);
  ColumnFeatures f = random_features(base_cfg, 17);
  TopicVector t = random_topic(3, 23);

  CHECK_THROWS_WITH_AS(static_cast<void>(forward(base, f, &t, Mode::kEval)),
                       doctest::Contains("without topic input"), std::invalid_argument);

  NetworkConfig topic_cfg = tiny_config(true, 5);
  ClassifierModel topic_model = init_network(topic_cfg);
  CHECK_THROWS_WITH_AS(static_cast<void>(forward(topic_model, f, nullptr, Mode::kEval)),
                       doctest::Contains("expects a topic vector"), std::invalid_argument);

  std::vector<double> p = forward(topic_model, f, &t, Mode::kEval);
  CHECK(p.size() == 3);

  TopicVector short_topic;
  short_topic.theta = {0.5, 0.5};
  CHECK_THROWS_AS(static_cast<void>(forward(topic_model, f, &short_topic, Mode::kEval)),
                  std::invalid_argument);

  ColumnFeatures bad = f;
  bad.char_v.pop_back();
  CHECK_THROWS_WITH_AS(static_cast<void>(forward(base, bad, nullptr, Mode::kEval)),
                       doctest::Contains("feature dimensions"), std::invalid_argument);
}

TEST_CASE("dropout fires only in train mode and follows the rng") {
  // Dropout is only observable on a real batch: train-mode batch norm over a
  // single example collapses every unit to its beta, masking the masks.
  NetworkConfig cfg = tiny_config(false, 5);
  cfg.dropout_rate = 0.5;
  ClassifierModel m = init_network(cfg);
  ColumnFeatures f1 = random_features(cfg, 17);
  ColumnFeatures f2 = random_features(cfg, 18);
  ColumnFeatures f3 = random_features(cfg, 19);
  std::vector<LabeledExample> batch{{&f1, nullptr, 0}, {&f2, nullptr, 1}, {&f3, nullptr, 2}};

  ClassifierModel m1 = m, m1b = m, m2 = m;
  Rng r1(1), r1b(1), r2(2);
  Mat a = forward_batch(m1, batch, Mode::kTrain, &r1);
  Mat a_again = forward_batch(m1b, batch, Mode::kTrain, &r1b);
  Mat b = forward_batch(m2, batch, Mode::kTrain, &r2);
  CHECK(a.data == a_again.data);
  CHECK(a.data != b.data);

  // eval ignores the rng entirely
  Rng r3(3);
  Mat e1 = forward_batch(m, batch, Mode::kEval, &r3);
  Mat e2 = forward_batch(m, batch, Mode::kEval, nullptr);
  CHECK(e1.data == e2.data);

  // rate 0 makes train-with-rng equal train-without-rng
  NetworkConfig nodrop = tiny_config(false, 5);
  ClassifierModel m0a = init_network(nodrop);
  ClassifierModel m0b = init_network(nodrop);
  Rng r4(4);
  Mat t1 = forward_batch(m0a, batch, Mode::kTrain, &r4);
  Mat t2 = forward_batch(m0b, batch, Mode::kTrain, nullptr);
  CHECK(t1.data == t2.data);
}

TEST_CASE("forward_batch updates running stats only in train mode") {
  NetworkConfig cfg = tiny_config(false, 5);
  ClassifierModel m = init_network(cfg);
  ColumnFeatures f1 = random_features(cfg, 17);
  ColumnFeatures f2 = random_features(cfg, 18);
  std::vector<LabeledExample> batch{{&f1, nullptr, 0}, {&f2, nullptr, 1}};

  std::vector<double> before = flat_state(m);
  Mat probs = forward_batch(m, batch, Mode::kEval, nullptr);
  CHECK(flat_state(m) == before);
  REQUIRE(probs.rows == 2);
  REQUIRE(probs.cols == 3);
  for (size_t b = 0; b < 2; ++b) {
    double sum = 0.0;
    for (size_t j = 0; j < 3; ++j) sum += probs(b, j);
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
  }

  forward_batch(m, batch, Mode::kTrain, nullptr);
  std::vector<double> after = flat_state(m);
  CHECK(after != before);
  forward_batch(m, batch, Mode::kTrain, nullptr);
  CHECK(flat_state(m) != after);  // momentum keeps blending
}

TEST_CASE("analytic gradients match finite differences through the full network") {
  const double eps = 1e-5;
  for (bool use_topic : {false, true}) {
    CAPTURE(use_topic);
    NetworkConfig cfg = tiny_config(use_topic, 7);
    ClassifierModel m = init_network(cfg);
    TopicVector t = random_topic(3, 40);

    // Resample inputs whose smallest |pre-activation| clears the kink margin,
    // so no finite-difference step crosses a relu corner.
    bool found = false;
    for (uint64_t fs = 100; fs < 160; ++fs) {
      ColumnFeatures f = random_features(cfg, fs);
      LabeledExample ex{&f, use_topic ? &t : nullptr, 1};
      if (relu_kink_margin(m, ex) < 1e-3) continue;
      found = true;
      CHECK(gradient_check(m, ex, eps) < 1e-4);
      break;
    }
    CHECK(found);
  }
}

TEST_CASE("train_classifier fits a separable toy problem") {
  NetworkConfig cfg = tiny_config(false, 3);
  cfg.type_count = 2;
  ClassifierModel m = init_network(cfg);

  // Two classes separated by the sign pattern of word_v.
  Rng rng(55);
  std::vector<ColumnFeatures> feats;
  std::vector<TypeId> labels;
  for (int i = 0; i < 40; ++i) {
    TypeId label = i % 2;
    ColumnFeatures f = random_features(cfg, 1000 + static_cast<uint64_t>(i));
    for (size_t j = 0; j < f.word_v.size(); ++j) {
      double base = label == 0 ? 1.0 : -1.0;
      f.word_v[j] = base + rng.uniform(-0.2, 0.2);
    }
    feats.push_back(std::move(f));
    labels.push_back(label);
  }
  std::vector<LabeledExample> dataset;
  for (size_t i = 0; i < feats.size(); ++i) dataset.push_back({&feats[i], nullptr, labels[i]});

  TrainConfig tc;
  tc.epochs = 40;
  tc.learning_rate = 5e-3;
  tc.weight_decay = 1e-4;
  tc.batch_size = 8;
  tc.seed = 77;
  TrainResult res = train_classifier(m, dataset, tc);

  REQUIRE(res.epoch_loss.size() == 40);
  CHECK(res.epoch_loss.back() < res.epoch_loss.front());
  CHECK(res.epoch_loss.back() < 0.3);

  int correct = 0;
  for (size_t i = 0; i < dataset.size(); ++i) {
    std::vector<double> p = forward(m, feats[i], nullptr, Mode::kEval);
    TypeId pred = p[0] >= p[1] ? 0 : 1;
    if (pred == labels[i]) ++correct;
  }
  CHECK(correct >= 36);
}

TEST_CASE("train_classifier is deterministic in the seed") {
  NetworkConfig cfg = tiny_config(false, 3);
  cfg.dropout_rate = 0.3;

  std::vector<ColumnFeatures> feats;
  for (int i = 0; i < 12; ++i) feats.push_back(random_features(cfg, 2000 + static_cast<uint64_t>(i)));
  std::vector<LabeledExample> dataset;
  for (size_t i = 0; i < feats.size(); ++i)
    dataset.push_back({&feats[i], nullptr, static_cast<TypeId>(i % 3)});

  TrainConfig tc;
  tc.epochs = 5;
  tc.learning_rate = 1e-3;
  tc.batch_size = 4;
  tc.seed = 99;

  ClassifierModel a = init_network(cfg);
  ClassifierModel b = init_network(cfg);
  TrainResult ra = train_classifier(a, dataset, tc);
  TrainResult rb = train_classifier(b, dataset, tc);
  CHECK(ra.epoch_loss == rb.epoch_loss);
  CHECK(flat_params(a) == flat_params(b));
  CHECK(flat_state(a) == flat_state(b));

  ClassifierModel c = init_network(cfg);
  TrainConfig tc2 = tc;
  tc2.seed = 100;
  train_classifier(c, dataset, tc2);
  CHECK(flat_params(a) != flat_params(c));
}

TEST_CASE("zero learning rate freezes parameters but running stats still move") {
  NetworkConfig cfg = tiny_config(false, 3);
  std::vector<ColumnFeatures> feats;
  for (int i = 0; i < 8; ++i) feats.push_back(random_features(cfg, 3000 + static_cast<uint64_t>(i)));
  std::vector<LabeledExample> dataset;
  for (size_t i = 0; i < feats.size(); ++i)
    dataset.push_back({&feats[i], nullptr, static_cast<TypeId>(i % 3)});

  ClassifierModel m = init_network(cfg);
  std::vector<double> params0 = flat_params(m);
  std::vector<double> state0 = flat_state(m);

  TrainConfig tc;
  tc.epochs = 2;
  tc.learning_rate = 0.0;
  tc.batch_size = 4;
  tc.seed = 1;
  train_classifier(m, dataset, tc);
  CHECK(flat_params(m) == params0);
  CHECK(flat_state(m) != state0);
}

TEST_CASE("train_classifier validates its inputs") {
  NetworkConfig cfg = tiny_config(false, 3);
  ClassifierModel m = init_network(cfg);
  ColumnFeatures f = random_features(cfg, 1);

  std::vector<LabeledExample> empty;
  TrainConfig tc;
  CHECK_THROWS_AS(train_classifier(m, empty, tc), std::invalid_argument);

  std::vector<LabeledExample> bad_label{{&f, nullptr, 3}};
  CHECK_THROWS_AS(train_classifier(m, bad_label, tc), std::invalid_argument);
  bad_label[0].label = -1;
  CHECK_THROWS_AS(train_classifier(m, bad_label, tc), std::invalid_argument);

  std::vector<LabeledExample> ok{{&f, nullptr, 0}};
  TrainConfig bad_tc;
  bad_tc.epochs = 0;
  CHECK_THROWS_AS(train_classifier(m, ok, bad_tc), std::invalid_argument);
  bad_tc = TrainConfig{};
  bad_tc.batch_size = 0;
  CHECK_THROWS_AS(train_classifier(m, ok, bad_tc), std::invalid_argument);
  bad_tc = TrainConfig{};
  bad_tc.learning_rate = -1.0;
  CHECK_THROWS_AS(train_classifier(m, ok, bad_tc), std::invalid_argument);
}

TEST_CASE("relu_kink_margin reports the smallest pre-activation magnitude") {
  NetworkConfig cfg = tiny_config(false, 5);
  ClassifierModel m = init_network(cfg);
  ColumnFeatures f = random_features(cfg, 9);
  LabeledExample ex{&f, nullptr, 0};
  double margin = relu_kink_margin(m, ex);
  CHECK(margin >= 0.0);
  CHECK(std::isfinite(margin));
}
