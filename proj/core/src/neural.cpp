#include "tabsense/neural.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace tabsense {

void NetworkConfig::validate() const {
  if (d_char <= 0 || d_word <= 0 || d_para <= 0)
    throw std::invalid_argument("network input dimensions must be positive");
  if (use_topic && d_topic <= 0)
    throw std::invalid_argument("use_topic requires a positive topic dimension");
  if (subnet_hidden <= 0 || subnet_out <= 0 || primary_hidden <= 0)
    throw std::invalid_argument("network widths must be positive");
  if (dropout_rate < 0.0 || dropout_rate >= 1.0)
    throw std::invalid_argument("dropout_rate must lie in [0, 1)");
  if (type_count <= 1) throw std::invalid_argument("type_count must be >= 2");
}

namespace nn {

Mat dense_forward(const Mat& x, const Dense& d) {
  const size_t out_dim = d.w.rows, in_dim = d.w.cols;
  if (x.cols != in_dim) throw std::invalid_argument("dense_forward: input width mismatch");
  Mat y(x.rows, out_dim);
  for (size_t b = 0; b < x.rows; ++b) {
    const double* xr = x.row(b);
    double* yr = y.row(b);
    for (size_t o = 0; o < out_dim; ++o) {
      const double* wr = d.w.row(o);
      double acc = d.b[o];
      for (size_t i = 0; i < in_dim; ++i) acc += wr[i] * xr[i];
      yr[o] = acc;
    }
  }
  return y;
}

void dense_backward(const Mat& x, const Dense& d, const Mat& dy, Mat* dx, Mat* dw,
                    std::vector<double>* db) {
  const size_t out_dim = d.w.rows, in_dim = d.w.cols;
  if (dw) {  // accumulates
    for (size_t b = 0; b < x.rows; ++b) {
      const double* xr = x.row(b);
      const double* dyr = dy.row(b);
      for (size_t o = 0; o < out_dim; ++o) {
        double g = dyr[o];
        double* dwr = dw->row(o);
        for (size_t i = 0; i < in_dim; ++i) dwr[i] += g * xr[i];
      }
    }
  }
  if (db) {
    for (size_t b = 0; b < dy.rows; ++b)
      for (size_t o = 0; o < out_dim; ++o) (*db)[o] += dy(b, o);
  }
  if (dx) {
    *dx = Mat(x.rows, in_dim);
    for (size_t b = 0; b < x.rows; ++b) {
      const double* dyr = dy.row(b);
      double* dxr = dx->row(b);
      for (size_t o = 0; o < out_dim; ++o) {
        const double* wr = d.w.row(o);
        double g = dyr[o];
        for (size_t i = 0; i < in_dim; ++i) dxr[i] += g * wr[i];
      }
    }
  }
}

Mat relu(const Mat& x) {
  Mat y = x;
  for (double& v : y.data) v = v > 0.0 ? v : 0.0;
  return y;
}

Mat relu_backward(const Mat& x, const Mat& dy) {
  Mat dx = dy;
  for (size_t i = 0; i < x.data.size(); ++i)
    if (x.data[i] <= 0.0) dx.data[i] = 0.0;
  return dx;
}

Mat batchnorm_forward_train(const Mat& x, BatchNorm& bn, double momentum, double epsilon,
                            BnCache* cache, bool update_running) {
  const size_t m = x.rows, f = x.cols;
  std::vector<double> mean(f, 0.0), var(f, 0.0);
  for (size_t b = 0; b < m; ++b)
    for (size_t j = 0; j < f; ++j) mean[j] += x(b, j);
  for (size_t j = 0; j < f; ++j) mean[j] /= static_cast<double>(m);
  for (size_t b = 0; b < m; ++b)
    for (size_t j = 0; j < f; ++j) {
      double d = x(b, j) - mean[j];
      var[j] += d * d;
    }
  for (size_t j = 0; j < f; ++j) var[j] /= static_cast<double>(m);  // population

  Mat xhat(m, f);
  std::vector<double> inv_std(f);
  for (size_t j = 0; j < f; ++j) inv_std[j] = 1.0 / std::sqrt(var[j] + epsilon);
  for (size_t b = 0; b < m; ++b)
    for (size_t j = 0; j < f; ++j) xhat(b, j) = (x(b, j) - mean[j]) * inv_std[j];

  if (update_running) {
    for (size_t j = 0; j < f; ++j) {
      bn.running_mean[j] = (1.0 - momentum) * bn.running_mean[j] + momentum * mean[j];
      bn.running_var[j] = (1.0 - momentum) * bn.running_var[j] + momentum * var[j];
    }
  }
  if (cache) {
    cache->inv_std = inv_std;
    cache->xhat = xhat;
  }

  Mat y(m, f);
  for (size_t b = 0; b < m; ++b)
    for (size_t j = 0; j < f; ++j) y(b, j) = bn.gamma[j] * xhat(b, j) + bn.beta[j];
  return y;
}

Mat batchnorm_forward_eval(const Mat& x, const BatchNorm& bn, double epsilon) {
  Mat y(x.rows, x.cols);
  for (size_t j = 0; j < x.cols; ++j) {
    double inv_std = 1.0 / std::sqrt(bn.running_var[j] + epsilon);
    for (size_t b = 0; b < x.rows; ++b)
      y(b, j) = bn.gamma[j] * (x(b, j) - bn.running_mean[j]) * inv_std + bn.beta[j];
  }
  return y;
}

Mat batchnorm_backward_train(const Mat& dy, const BatchNorm& bn, const BnCache& cache,
                             std::vector<double>* dgamma, std::vector<double>* dbeta) {
  const size_t m = dy.rows, f = dy.cols;
  Mat dx(m, f);
  for (size_t j = 0; j < f; ++j) {
    double s1 = 0.0, s2 = 0.0;
    for (size_t b = 0; b < m; ++b) {
      double dxhat = dy(b, j) * bn.gamma[j];
      s1 += dxhat;
      s2 += dxhat * cache.xhat(b, j);
    }
    const double inv_m = 1.0 / static_cast<double>(m);
    for (size_t b = 0; b < m; ++b) {
      double dxhat = dy(b, j) * bn.gamma[j];
      dx(b, j) = cache.inv_std[j] * (dxhat - s1 * inv_m - cache.xhat(b, j) * s2 * inv_m);
    }
    if (dgamma)
      for (size_t b = 0; b < m; ++b) (*dgamma)[j] += dy(b, j) * cache.xhat(b, j);
    if (dbeta)
      for (size_t b = 0; b < m; ++b) (*dbeta)[j] += dy(b, j);
  }
  return dx;
}

Mat batchnorm_backward_eval(const Mat& x, const Mat& dy, const BatchNorm& bn, double epsilon,
                            std::vector<double>* dgamma, std::vector<double>* dbeta) {
  Mat dx(x.rows, x.cols);
  for (size_t j = 0; j < x.cols; ++j) {
    double inv_std = 1.0 / std::sqrt(bn.running_var[j] + epsilon);
    for (size_t b = 0; b < x.rows; ++b) {
      dx(b, j) = dy(b, j) * bn.gamma[j] * inv_std;
      if (dgamma) (*dgamma)[j] += dy(b, j) * (x(b, j) - bn.running_mean[j]) * inv_std;
      if (dbeta) (*dbeta)[j] += dy(b, j);
    }
  }
  return dx;
}

Mat log_softmax_rows(const Mat& logits) {
  Mat out(logits.rows, logits.cols);
  for (size_t b = 0; b < logits.rows; ++b) {
    const double* lr = logits.row(b);
    double mx = lr[0];
    for (size_t j = 1; j < logits.cols; ++j) mx = std::max(mx, lr[j]);
    double lse = 0.0;
    for (size_t j = 0; j < logits.cols; ++j) lse += std::exp(lr[j] - mx);
    lse = mx + std::log(lse);
    for (size_t j = 0; j < logits.cols; ++j) out(b, j) = lr[j] - lse;
  }
  return out;
}

double softmax_cross_entropy(const Mat& logits, const std::vector<TypeId>& labels, Mat* probs,
                             Mat* dlogits) {
  if (labels.size() != logits.rows)
    throw std::invalid_argument("softmax_cross_entropy: label count mismatch");
  Mat logp = log_softmax_rows(logits);
  const double inv_b = 1.0 / static_cast<double>(logits.rows);
  double loss = 0.0;
  if (probs) *probs = Mat(logits.rows, logits.cols);
  if (dlogits) *dlogits = Mat(logits.rows, logits.cols);
  for (size_t b = 0; b < logits.rows; ++b) {
    loss -= logp(b, static_cast<size_t>(labels[b]));
    for (size_t j = 0; j < logits.cols; ++j) {
      double p = std::exp(logp(b, j));
      if (probs) (*probs)(b, j) = p;
      if (dlogits) (*dlogits)(b, j) = (p - (j == static_cast<size_t>(labels[b]) ? 1.0 : 0.0)) * inv_b;
    }
  }
  return loss * inv_b;
}

}  // namespace nn

namespace {

Dense make_dense(size_t out_dim, size_t in_dim, Rng& rng) {
  Dense d;
  d.w = Mat(out_dim, in_dim);
  double bound = std::sqrt(6.0 / static_cast<double>(in_dim + out_dim));
  for (double& v : d.w.data) v = rng.uniform(-bound, bound);
  d.b.assign(out_dim, 0.0);
  return d;
}

BatchNorm make_bn(size_t f) {
  BatchNorm bn;
  bn.gamma.assign(f, 1.0);
  bn.beta.assign(f, 0.0);
  bn.running_mean.assign(f, 0.0);
  bn.running_var.assign(f, 1.0);
  return bn;
}

void add_dense_refs(std::vector<ParamRef>& refs, const std::string& name, Dense& d) {
  refs.push_back({name + ".w", &d.w.data, d.w.rows, d.w.cols, true});
  refs.push_back({name + ".b", &d.b, d.b.size(), 0, false});
}

struct BatchInputs {
  Mat xc, xw, xp, xt, xs;
};

BatchInputs assemble_inputs(const std::vector<LabeledExample>& batch, const NetworkConfig& cfg) {
  BatchInputs in;
  const size_t n = batch.size();
  in.xc = Mat(n, static_cast<size_t>(cfg.d_char));
  in.xw = Mat(n, static_cast<size_t>(cfg.d_word));
  in.xp = Mat(n, static_cast<size_t>(cfg.d_para));
  in.xs = Mat(n, kStatDim);
  if (cfg.use_topic) in.xt = Mat(n, static_cast<size_t>(cfg.d_topic));

  for (size_t b = 0; b < n; ++b) {
    const LabeledExample& ex = batch[b];
    if (!ex.features) throw std::invalid_argument("example has no features");
    const ColumnFeatures& f = *ex.features;
    if (f.char_v.size() != in.xc.cols || f.word_v.size() != in.xw.cols ||
        f.para_v.size() != in.xp.cols || f.stat_v.size() != kStatDim)
      throw std::invalid_argument("feature dimensions do not match the network config");
    if (cfg.use_topic) {
      if (!ex.topic) throw std::invalid_argument("model expects a topic vector and none was given");
      if (ex.topic->theta.size() != in.xt.cols)
        throw std::invalid_argument("topic vector dimension does not match the network config");
    } else if (ex.topic) {
      throw std::invalid_argument("model was built without topic input; reject the topic vector");
    }
    std::copy(f.char_v.begin(), f.char_v.end(), in.xc.row(b));
    std::copy(f.word_v.begin(), f.word_v.end(), in.xw.row(b));
    std::copy(f.para_v.begin(), f.para_v.end(), in.xp.row(b));
    std::copy(f.stat_v.begin(), f.stat_v.end(), in.xs.row(b));
    if (cfg.use_topic) std::copy(ex.topic->theta.begin(), ex.topic->theta.end(), in.xt.row(b));
  }
  return in;
}

struct Cache {
  Mat hc, hcr, oc;
  Mat hw, hwr, ow;
  Mat hp, hpr, op_;
  Mat ht, htr, ot;
  Mat z0;
  Mat a1, n1, r1, m1, d1;
  Mat a2, n2, r2, m2, d2;
  Mat logits;
  nn::BnCache bn1, bn2;
};

Mat concat_cols(const std::vector<const Mat*>& parts) {
  size_t rows = parts[0]->rows, cols = 0;
  for (const Mat* p : parts) cols += p->cols;
  Mat out(rows, cols);
  for (size_t b = 0; b < rows; ++b) {
    double* dst = out.row(b);
    for (const Mat* p : parts) {
      const double* src = p->row(b);
      std::copy(src, src + p->cols, dst);
      dst += p->cols;
    }
  }
  return out;
}

Mat dropout_mask(size_t rows, size_t cols, double rate, Rng& rng) {
  Mat m(rows, cols);
  const double keep_scale = 1.0 / (1.0 - rate);
  for (double& v : m.data) v = rng.uniform01() < rate ? 0.0 : keep_scale;
  return m;
}

Mat apply_mask(const Mat& x, const Mat& mask) {
  if (mask.empty()) return x;
  Mat y = x;
  for (size_t i = 0; i < y.data.size(); ++i) y.data[i] *= mask.data[i];
  return y;
}

// Full model forward. In train mode batch-norm uses batch statistics; running
// stats update only when `update_running`. Dropout fires only in train mode
// with an rng and a positive rate.
Mat run_forward(const ClassifierModel& model, const BatchInputs& in, Mode mode, Rng* rng,
                bool update_running, Cache* cache, BatchNorm* bn1_live, BatchNorm* bn2_live) {
  const NetworkConfig& cfg = model.config;
  Cache local;
  Cache& c = cache ? *cache : local;

  c.hc = nn::dense_forward(in.xc, model.char1);
  c.hcr = nn::relu(c.hc);
  c.oc = nn::dense_forward(c.hcr, model.char2);
  c.hw = nn::dense_forward(in.xw, model.word1);
  c.hwr = nn::relu(c.hw);
  c.ow = nn::dense_forward(c.hwr, model.word2);
  c.hp = nn::dense_forward(in.xp, model.para1);
  c.hpr = nn::relu(c.hp);
  c.op_ = nn::dense_forward(c.hpr, model.para2);
  if (cfg.use_topic) {
    c.ht = nn::dense_forward(in.xt, model.topic1);
    c.htr = nn::relu(c.ht);
    c.ot = nn::dense_forward(c.htr, model.topic2);
  }

  std::vector<const Mat*> parts{&c.oc, &c.ow, &c.op_};
  if (cfg.use_topic) parts.push_back(&c.ot);
  parts.push_back(&in.xs);
  c.z0 = concat_cols(parts);

  const bool drop = mode == Mode::kTrain && rng != nullptr && cfg.dropout_rate > 0.0;

  c.a1 = nn::dense_forward(c.z0, model.primary1);
  if (mode == Mode::kTrain) {
    BatchNorm tmp = model.bn1;
    BatchNorm& live = (update_running && bn1_live) ? *bn1_live : tmp;
    c.n1 = nn::batchnorm_forward_train(c.a1, live, cfg.bn_momentum, cfg.bn_epsilon, &c.bn1,
                                       update_running && bn1_live);
  } else {
    c.n1 = nn::batchnorm_forward_eval(c.a1, model.bn1, cfg.bn_epsilon);
  }
  c.r1 = nn::relu(c.n1);
  if (drop) c.m1 = dropout_mask(c.r1.rows, c.r1.cols, cfg.dropout_rate, *rng);
  c.d1 = apply_mask(c.r1, c.m1);

  c.a2 = nn::dense_forward(c.d1, model.primary2);
  if (mode == Mode::kTrain) {
    BatchNorm tmp = model.bn2;
    BatchNorm& live = (update_running && bn2_live) ? *bn2_live : tmp;
    c.n2 = nn::batchnorm_forward_train(c.a2, live, cfg.bn_momentum, cfg.bn_epsilon, &c.bn2,
                                       update_running && bn2_live);
  } else {
    c.n2 = nn::batchnorm_forward_eval(c.a2, model.bn2, cfg.bn_epsilon);
  }
  c.r2 = nn::relu(c.n2);
  if (drop) c.m2 = dropout_mask(c.r2.rows, c.r2.cols, cfg.dropout_rate, *rng);
  c.d2 = apply_mask(c.r2, c.m2);

  c.logits = nn::dense_forward(c.d2, model.out);

  Mat probs;
  Mat logp = nn::log_softmax_rows(c.logits);
  probs = Mat(logp.rows, logp.cols);
  for (size_t i = 0; i < logp.data.size(); ++i) probs.data[i] = std::exp(logp.data[i]);
  return probs;
}

ClassifierModel zero_like(const ClassifierModel& model) {
  ClassifierModel z = model;
  for (ParamRef& r : param_refs(z)) std::fill(r.values->begin(), r.values->end(), 0.0);
  for (ParamRef& r : state_refs(z)) std::fill(r.values->begin(), r.values->end(), 0.0);
  return z;
}

// Gradient of mean cross-entropy wrt every parameter; accumulates into
// `grads` (shapes aligned with the model). `mode` selects the batch-norm
// backward rule matching the forward that produced `cache`.
void run_backward(const ClassifierModel& model, const BatchInputs& in, const Cache& c,
                  const std::vector<TypeId>& labels, Mode mode, ClassifierModel* grads) {
  Mat dlogits;
  nn::softmax_cross_entropy(c.logits, labels, nullptr, &dlogits);

  Mat dd2;
  nn::dense_backward(c.d2, model.out, dlogits, &dd2, &grads->out.w, &grads->out.b);
  Mat dr2 = apply_mask(dd2, c.m2);
  Mat dn2 = nn::relu_backward(c.n2, dr2);
  Mat da2 = mode == Mode::kTrain
                ? nn::batchnorm_backward_train(dn2, model.bn2, c.bn2, &grads->bn2.gamma,
                                               &grads->bn2.beta)
                : nn::batchnorm_backward_eval(c.a2, dn2, model.bn2, model.config.bn_epsilon,
                                              &grads->bn2.gamma, &grads->bn2.beta);

  Mat dd1;
  nn::dense_backward(c.d1, model.primary2, da2, &dd1, &grads->primary2.w, &grads->primary2.b);
  Mat dr1 = apply_mask(dd1, c.m1);
  Mat dn1 = nn::relu_backward(c.n1, dr1);
  Mat da1 = mode == Mode::kTrain
                ? nn::batchnorm_backward_train(dn1, model.bn1, c.bn1, &grads->bn1.gamma,
                                               &grads->bn1.beta)
                : nn::batchnorm_backward_eval(c.a1, dn1, model.bn1, model.config.bn_epsilon,
                                              &grads->bn1.gamma, &grads->bn1.beta);

  Mat dz0;
  nn::dense_backward(c.z0, model.primary1, da1, &dz0, &grads->primary1.w, &grads->primary1.b);

  const size_t so = static_cast<size_t>(model.config.subnet_out);
  auto slice = [&](size_t offset, size_t width) {
    Mat s(dz0.rows, width);
    for (size_t b = 0; b < dz0.rows; ++b)
      std::copy(dz0.row(b) + offset, dz0.row(b) + offset + width, s.row(b));
    return s;
  };

  size_t off = 0;
  Mat doc = slice(off, so);
  off += so;
  Mat dow = slice(off, so);
  off += so;
  Mat dop = slice(off, so);
  off += so;
  Mat dot;
  if (model.config.use_topic) {
    dot = slice(off, so);
    off += so;
  }
  // The stat slice flows straight to the input; nothing to accumulate.

  Mat dhcr;
  nn::dense_backward(c.hcr, model.char2, doc, &dhcr, &grads->char2.w, &grads->char2.b);
  Mat dhc = nn::relu_backward(c.hc, dhcr);
  nn::dense_backward(in.xc, model.char1, dhc, nullptr, &grads->char1.w, &grads->char1.b);

  Mat dhwr;
  nn::dense_backward(c.hwr, model.word2, dow, &dhwr, &grads->word2.w, &grads->word2.b);
  Mat dhw = nn::relu_backward(c.hw, dhwr);
  nn::dense_backward(in.xw, model.word1, dhw, nullptr, &grads->word1.w, &grads->word1.b);

  Mat dhpr;
  nn::dense_backward(c.hpr, model.para2, dop, &dhpr, &grads->para2.w, &grads->para2.b);
  Mat dhp = nn::relu_backward(c.hp, dhpr);
  nn::dense_backward(in.xp, model.para1, dhp, nullptr, &grads->para1.w, &grads->para1.b);

  if (model.config.use_topic) {
    Mat dhtr;
    nn::dense_backward(c.htr, model.topic2, dot, &dhtr, &grads->topic2.w, &grads->topic2.b);
    Mat dht = nn::relu_backward(c.ht, dhtr);
    nn::dense_backward(in.xt, model.topic1, dht, nullptr, &grads->topic1.w, &grads->topic1.b);
  }
}

}  // namespace

std::vector<ParamRef> param_refs(ClassifierModel& model) {
  std::vector<ParamRef> refs;
  add_dense_refs(refs, "char1", model.char1);
  add_dense_refs(refs, "char2", model.char2);
  add_dense_refs(refs, "word1", model.word1);
  add_dense_refs(refs, "word2", model.word2);
  add_dense_refs(refs, "para1", model.para1);
  add_dense_refs(refs, "para2", model.para2);
  if (model.config.use_topic) {
    add_dense_refs(refs, "topic1", model.topic1);
    add_dense_refs(refs, "topic2", model.topic2);
  }
  add_dense_refs(refs, "primary1", model.primary1);
  refs.push_back({"bn1.gamma", &model.bn1.gamma, model.bn1.gamma.size(), 0, false});
  refs.push_back({"bn1.beta", &model.bn1.beta, model.bn1.beta.size(), 0, false});
  add_dense_refs(refs, "primary2", model.primary2);
  refs.push_back({"bn2.gamma", &model.bn2.gamma, model.bn2.gamma.size(), 0, false});
  refs.push_back({"bn2.beta", &model.bn2.beta, model.bn2.beta.size(), 0, false});
  add_dense_refs(refs, "out", model.out);
  return refs;
}

std::vector<ParamRef> state_refs(ClassifierModel& model) {
  return {
      {"bn1.running_mean", &model.bn1.running_mean, model.bn1.running_mean.size(), 0, false},
      {"bn1.running_var", &model.bn1.running_var, model.bn1.running_var.size(), 0, false},
      {"bn2.running_mean", &model.bn2.running_mean, model.bn2.running_mean.size(), 0, false},
      {"bn2.running_var", &model.bn2.running_var, model.bn2.running_var.size(), 0, false},
  };
}

ClassifierModel init_network(const NetworkConfig& config) {
  config.validate();
  ClassifierModel m;
  m.config = config;
  Rng rng(config.seed);

  const size_t sh = static_cast<size_t>(config.subnet_hidden);
  const size_t so = static_cast<size_t>(config.subnet_out);
  m.char1 = make_dense(sh, static_cast<size_t>(config.d_char), rng);
  m.char2 = make_dense(so, sh, rng);
  m.word1 = make_dense(sh, static_cast<size_t>(config.d_word), rng);
  m.word2 = make_dense(so, sh, rng);
  m.para1 = make_dense(sh, static_cast<size_t>(config.d_para), rng);
  m.para2 = make_dense(so, sh, rng);
  if (config.use_topic) {
    m.topic1 = make_dense(sh, static_cast<size_t>(config.d_topic), rng);
    m.topic2 = make_dense(so, sh, rng);
  }

  const size_t ph = static_cast<size_t>(config.primary_hidden);
  m.primary1 = make_dense(ph, static_cast<size_t>(config.concat_dim()), rng);
  m.bn1 = make_bn(ph);
  m.primary2 = make_dense(ph, ph, rng);
  m.bn2 = make_bn(ph);
  m.out = make_dense(static_cast<size_t>(config.type_count), ph, rng);
  return m;
}

std::vector<double> forward(const ClassifierModel& model, const ColumnFeatures& features,
                            const TopicVector* topic, Mode mode, Rng* dropout_rng) {
  std::vector<LabeledExample> batch{{&features, topic, 0}};
  BatchInputs in = assemble_inputs(batch, model.config);
  Mat probs = run_forward(model, in, mode, dropout_rng, false, nullptr, nullptr, nullptr);
  return std::vector<double>(probs.row(0), probs.row(0) + probs.cols);
}

Mat forward_batch(ClassifierModel& model, const std::vector<LabeledExample>& batch, Mode mode,
                  Rng* dropout_rng) {
  BatchInputs in = assemble_inputs(batch, model.config);
  return run_forward(model, in, mode, dropout_rng, mode == Mode::kTrain, nullptr, &model.bn1,
                     &model.bn2);
}

TrainResult train_classifier(ClassifierModel& model, const std::vector<LabeledExample>& dataset,
                             const TrainConfig& tc) {
  if (dataset.empty()) throw std::invalid_argument("train_classifier: empty dataset");
  if (tc.epochs < 1) throw std::invalid_argument("train_classifier: epochs must be >= 1");
  if (tc.learning_rate < 0) throw std::invalid_argument("train_classifier: negative learning rate");
  if (tc.batch_size < 1) throw std::invalid_argument("train_classifier: batch_size must be >= 1");
  for (const LabeledExample& ex : dataset)
    if (ex.label < 0 || ex.label >= model.config.type_count)
      throw std::invalid_argument("train_classifier: label outside type vocabulary");

  ClassifierModel grads = zero_like(model);
  ClassifierModel m_state = zero_like(model);
  ClassifierModel v_state = zero_like(model);
  auto p = param_refs(model);
  auto g = param_refs(grads);
  auto ms = param_refs(m_state);
  auto vs = param_refs(v_state);

  const double b1 = 0.9, b2 = 0.999, adam_eps = 1e-8;
  int64_t t = 0;

  Rng rng(tc.seed);
  std::vector<size_t> order(dataset.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;

  TrainResult result;
  result.epoch_loss.reserve(static_cast<size_t>(tc.epochs));

  for (int epoch = 0; epoch < tc.epochs; ++epoch) {
    rng.shuffle(order);
    double epoch_loss = 0.0;

    for (size_t start = 0; start < order.size(); start += static_cast<size_t>(tc.batch_size)) {
      const size_t end = std::min(order.size(), start + static_cast<size_t>(tc.batch_size));
      std::vector<LabeledExample> batch;
      std::vector<TypeId> labels;
      batch.reserve(end - start);
      for (size_t i = start; i < end; ++i) {
        batch.push_back(dataset[order[i]]);
        labels.push_back(dataset[order[i]].label);
      }

      BatchInputs in = assemble_inputs(batch, model.config);
      Cache cache;
      run_forward(model, in, Mode::kTrain, &rng, true, &cache, &model.bn1, &model.bn2);
      double loss = nn::softmax_cross_entropy(cache.logits, labels, nullptr, nullptr);
      if (!std::isfinite(loss))
        throw std::runtime_error("training loss became non-finite at epoch " +
                                 std::to_string(epoch));
      epoch_loss += loss * static_cast<double>(batch.size());

      for (auto& r : g) std::fill(r.values->begin(), r.values->end(), 0.0);
      run_backward(model, in, cache, labels, Mode::kTrain, &grads);

      ++t;
      const double bc1 = 1.0 - std::pow(b1, static_cast<double>(t));
      const double bc2 = 1.0 - std::pow(b2, static_cast<double>(t));
      for (size_t r = 0; r < p.size(); ++r) {
        std::vector<double>& x = *p[r].values;
        std::vector<double>& gr = *g[r].values;
        std::vector<double>& mm = *ms[r].values;
        std::vector<double>& vv = *vs[r].values;
        for (size_t i = 0; i < x.size(); ++i) {
          mm[i] = b1 * mm[i] + (1.0 - b1) * gr[i];
          vv[i] = b2 * vv[i] + (1.0 - b2) * gr[i] * gr[i];
          double mhat = mm[i] / bc1;
          double vhat = vv[i] / bc2;
          x[i] -= tc.learning_rate * mhat / (std::sqrt(vhat) + adam_eps);
          if (p[r].decay) x[i] -= tc.learning_rate * tc.weight_decay * x[i];
        }
      }
    }
    result.epoch_loss.push_back(epoch_loss / static_cast<double>(dataset.size()));
  }
  return result;
}

double gradient_check(const ClassifierModel& model, const LabeledExample& example, double epsilon) {
  ClassifierModel work = model;
  std::vector<LabeledExample> batch{example};
  std::vector<TypeId> labels{example.label};
  BatchInputs in = assemble_inputs(batch, work.config);

  Cache cache;
  run_forward(work, in, Mode::kEval, nullptr, false, &cache, nullptr, nullptr);
  ClassifierModel grads = zero_like(work);
  run_backward(work, in, cache, labels, Mode::kEval, &grads);

  auto loss_at = [&]() {
    Cache c;
    run_forward(work, in, Mode::kEval, nullptr, false, &c, nullptr, nullptr);
    return nn::softmax_cross_entropy(c.logits, labels, nullptr, nullptr);
  };

  auto pw = param_refs(work);
  auto pg = param_refs(grads);
  double max_rel = 0.0;
  for (size_t r = 0; r < pw.size(); ++r) {
    std::vector<double>& x = *pw[r].values;
    const std::vector<double>& a = *pg[r].values;
    for (size_t i = 0; i < x.size(); ++i) {
      const double orig = x[i];
      x[i] = orig + epsilon;
      double lp = loss_at();
      x[i] = orig - epsilon;
      double lm = loss_at();
      x[i] = orig;
      double numeric = (lp - lm) / (2.0 * epsilon);
      double rel = std::fabs(a[i] - numeric) / std::max(1e-8, std::fabs(a[i]) + std::fabs(numeric));
      max_rel = std::max(max_rel, rel);
    }
  }
  return max_rel;
}

double relu_kink_margin(const ClassifierModel& model, const LabeledExample& example) {
  std::vector<LabeledExample> batch{example};
  BatchInputs in = assemble_inputs(batch, model.config);
  Cache c;
  run_forward(model, in, Mode::kEval, nullptr, false, &c, nullptr, nullptr);

  double margin = HUGE_VAL;
  auto scan = [&margin](const Mat& m) {
    for (double v : m.data) margin = std::min(margin, std::fabs(v));
  };
  scan(c.hc);
  scan(c.hw);
  scan(c.hp);
  if (model.config.use_topic) scan(c.ht);
  scan(c.n1);
  scan(c.n2);
  return margin;
}

}  // namespace tabsense
