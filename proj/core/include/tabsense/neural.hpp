#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "tabsense/corpus.hpp"
#include "tabsense/featurizer.hpp"
#include "tabsense/mat.hpp"
#include "tabsense/rng.hpp"
#include "tabsense/topics.hpp"

namespace tabsense {

struct NetworkConfig {
  int d_char = 0;
  int d_word = 0;
  int d_para = 0;
  int d_topic = 0;  // ignored unless use_topic
  int subnet_hidden = 64;
  int subnet_out = 32;
  int primary_hidden = 128;
  double dropout_rate = 0.3;
  bool use_topic = false;
  int type_count = 0;
  uint64_t seed = 0;

  double bn_momentum = 0.1;
  double bn_epsilon = 1e-5;

  void validate() const;
  int concat_dim() const { return subnet_out * (use_topic ? 4 : 3) + kStatDim; }
};

struct Dense {
  Mat w;                   // out x in
  std::vector<double> b;   // out
};

struct BatchNorm {
  std::vector<double> gamma, beta;
  std::vector<double> running_mean, running_var;
};

// Per-group subnetworks (dense -> ReLU -> dense), concatenated with the raw
// 27 stats, then two dense -> batch-norm -> ReLU -> dropout blocks and a
// softmax output layer.
struct ClassifierModel {
  NetworkConfig config;
  Dense char1, char2, word1, word2, para1, para2;
  Dense topic1, topic2;  // present iff config.use_topic
  Dense primary1, primary2, out;
  BatchNorm bn1, bn2;
};

enum class Mode { kTrain, kEval };

struct TrainConfig {
  int epochs = 100;
  double learning_rate = 1e-4;
  double weight_decay = 1e-4;  // decoupled; weights only
  int batch_size = 32;
  uint64_t seed = 0;
};

struct LabeledExample {
  const ColumnFeatures* features = nullptr;
  const TopicVector* topic = nullptr;  // required iff model.config.use_topic
  TypeId label = 0;
};

struct TrainResult {
  std::vector<double> epoch_loss;  // mean cross-entropy per example
};

// Named views over trainable parameters; grads/optimizer state reuse the
// model struct itself as an aligned container of the same shapes.
struct ParamRef {
  std::string name;
  std::vector<double>* values = nullptr;
  size_t rows = 0, cols = 0;  // cols 0 for vectors
  bool decay = false;         // true only for dense weight matrices
};
std::vector<ParamRef> param_refs(ClassifierModel& model);
std::vector<ParamRef> state_refs(ClassifierModel& model);  // batch-norm running stats

ClassifierModel init_network(const NetworkConfig& config);

// Probability vector over types. Train mode uses batch statistics (batch of
// one here) and applies dropout only when an rng is supplied; eval mode uses
// running statistics and is deterministic. A topic vector must be supplied
// iff the model was built with use_topic, otherwise the call is rejected.
std::vector<double> forward(const ClassifierModel& model, const ColumnFeatures& features,
                            const TopicVector* topic, Mode mode, Rng* dropout_rng = nullptr);

// Batch forward for training and batch-interaction tests; rows of the result
// are per-example probability vectors. In train mode batch-norm running
// stats are updated in place.
Mat forward_batch(ClassifierModel& model, const std::vector<LabeledExample>& batch, Mode mode,
                  Rng* dropout_rng);

TrainResult train_classifier(ClassifierModel& model, const std::vector<LabeledExample>& dataset,
                             const TrainConfig& tc);

// Max over parameters of |analytic - numeric| / max(1e-8, |analytic| + |numeric|)
// for the cross-entropy loss at one example, dropout off, batch-norm eval.
double gradient_check(const ClassifierModel& model, const LabeledExample& example, double epsilon);

// Smallest |ReLU preactivation| seen in an eval forward. Finite-difference
// checks are only meaningful away from the kinks, so harnesses resample
// inputs for which this gap is below ~10*epsilon.
double relu_kink_margin(const ClassifierModel& model, const LabeledExample& example);

// Layer primitives, exposed for the per-layer gradient-check tests and for
// CRF unary computation.
namespace nn {

Mat dense_forward(const Mat& x, const Dense& d);
void dense_backward(const Mat& x, const Dense& d, const Mat& dy, Mat* dx, Mat* dw,
                    std::vector<double>* db);

Mat relu(const Mat& x);
Mat relu_backward(const Mat& x, const Mat& dy);

struct BnCache {
  std::vector<double> inv_std;
  Mat xhat;
};
Mat batchnorm_forward_train(const Mat& x, BatchNorm& bn, double momentum, double epsilon,
                            BnCache* cache, bool update_running);
Mat batchnorm_forward_eval(const Mat& x, const BatchNorm& bn, double epsilon);
Mat batchnorm_backward_train(const Mat& dy, const BatchNorm& bn, const BnCache& cache,
                             std::vector<double>* dgamma, std::vector<double>* dbeta);
Mat batchnorm_backward_eval(const Mat& x, const Mat& dy, const BatchNorm& bn, double epsilon,
                            std::vector<double>* dgamma, std::vector<double>* dbeta);

// Mean cross-entropy over the batch; optional softmax probs and gradient
// wrt logits (already divided by batch size).
double softmax_cross_entropy(const Mat& logits, const std::vector<TypeId>& labels, Mat* probs,
                             Mat* dlogits);
Mat log_softmax_rows(const Mat& logits);

}  // namespace nn

}  // namespace tabsense
