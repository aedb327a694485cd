#pragma once

#include <vector>

#include "iotzsl/contrastive.hpp"
#include "iotzsl/dataset.hpp"
#include "iotzsl/iot_branch.hpp"

namespace iotzsl {

struct GanConfig {
  int noise_dim = 16;
  std::vector<int> gen_hidden = {96, 96};
  std::vector<int> critic_hidden = {96, 96};
  double penalty_coeff = 10.0;  // xi
  int critic_steps = 5;         // critic updates per generator update
  int n_aug_per_class = 0;      // 0: median per-seen-class train count
  double lr = 0.001;
  double momentum = 0.9;
  int epochs = 60;
  int batch_size = 64;
  double cls_weight = 1.0;
  double collapse_variance_floor = 1e-4;
  uint64_t seed = 0;

  void validate() const {
    IOTZSL_REQUIRE(penalty_coeff > 0.0, ErrKind::config, "penalty coefficient must be > 0");
    IOTZSL_REQUIRE(noise_dim >= 1 && batch_size >= 2 && epochs >= 0, ErrKind::config,
                   "bad gan config");
    IOTZSL_REQUIRE(critic_steps >= 1, ErrKind::config, "critic_steps must be >= 1");
  }
};

// Dense MLP with leaky-relu hidden layers and a linear output, with explicit
// caches and hand-rolled backprop. The critic additionally supports the
// input-gradient pass and the double-backprop needed by the gradient
// penalty; with piecewise-linear activations the second derivative through
// the activation pattern vanishes almost everywhere, so treating the
// patterns as constants gives the exact parameter gradient of the penalty.
class GanMlp {
 public:
  GanMlp() = default;
  GanMlp(int in_dim, const std::vector<int>& hidden, int out_dim, Rng& rng, double leak = 0.2);

  struct Cache {
    std::vector<Mat> pre;   // pre-activations per layer
    std::vector<Mat> act;   // act[0] = input, act[l] = activation of layer l
    std::vector<Mat> dz;    // filled by input_gradient: dOut/dZ_l per layer
  };

  int in_dim() const { return W_.empty() ? 0 : W_.front().rows(); }
  int out_dim() const { return W_.empty() ? 0 : W_.back().cols(); }
  size_t layers() const { return W_.size(); }

  Mat forward(const Mat& x, Cache* cache = nullptr) const;

  // Accumulates parameter gradients given dL/d(output); returns dL/d(input).
  Mat backward(const Cache& cache, const Mat& dout, std::vector<Mat>& grad_w,
               std::vector<Mat>& grad_b) const;

  // d(output)/d(input) for a scalar-output net, batched rows; also fills
  // cache.dz for the penalty pass.
  Mat input_gradient(Cache& cache) const;

  // penalty = mean_i (||g_i|| - 1)^2 over the first x_dim input columns of
  // the input gradient; accumulates d(penalty)/dW into grad_w. Returns the
  // penalty value. input_gradient must have run on this cache.
  double gradient_penalty_backward(const Cache& cache, int x_dim, std::vector<Mat>& grad_w) const;
  static double gradient_penalty_value(const Mat& input_grad, int x_dim);

  std::vector<Mat>& weights() { return W_; }
  std::vector<Mat>& biases() { return b_; }
  const std::vector<Mat>& weights() const { return W_; }
  const std::vector<Mat>& biases() const { return b_; }
  double leak() const { return leak_; }

  void visit(const std::string& prefix, const nn::ParamVisitor& f);

 private:
  std::vector<Mat> W_;  // [in x out] per layer
  std::vector<Mat> b_;  // [1 x out]
  double leak_ = 0.2;
};

// The three terms of the adversarial objective evaluated on one batch:
// E[D(x,t)] - E[D(x~,t)] - xi * E[(||grad_xhat D(xhat,t)||_2 - 1)^2].
struct WganLossParts {
  double real_score = 0.0;
  double fake_score = 0.0;
  double penalty = 0.0;
  double xi = 0.0;
  double total() const { return real_score - fake_score - xi * penalty; }
};

// Evaluates the loss on explicit batches; interpolates are formed per sample
// as xhat = alpha*x + (1-alpha)*x~ with the caller's alphas in [0,1].
WganLossParts wgan_loss_parts(const GanMlp& critic, const Mat& real_x, const Mat& fake_x,
                              const Mat& cond, const Mat& alphas, double xi);

// Convenience form matching the training path: draws z ~ N(0,1) and alpha ~
// U(0,1) from `rng`, generates the fakes with G, and evaluates.
WganLossParts wgan_loss(const GanMlp& critic, const GanMlp& generator, const Mat& real_x,
                        const Mat& cond, double xi, Rng& rng);

// Mean negative log-likelihood of labels under the frozen linear softmax.
double classification_loss(const LinearSoftmax& classifier, const Mat& x,
                           const std::vector<int>& labels);

struct TrainedGan {
  GanMlp generator;
  GanMlp critic;
  std::vector<double> wasserstein_estimate;  // per epoch
  bool collapsed = false;
};

// Conditional WGAN-GP training on seen-class windows. `prototypes` rows are
// indexed by class id; `theta` is the frozen seen-class softmax scoring
// generated samples. Windows enter flattened; shapes come from `channels`
// and `timesteps`.
TrainedGan train_gan(const std::vector<SensorWindow>& windows,
                     const std::vector<int>& train_indices, const Mat& prototypes,
                     const LinearSoftmax& theta, const GanConfig& cfg);

// N_aug generated windows per unseen class, labeled with the unseen ids;
// the generator only ever sees their prototypes.
std::vector<SensorWindow> synthesize_unseen(const GanMlp& generator, const Mat& prototypes,
                                            const std::vector<int>& unseen_classes, int n_aug,
                                            int channels, int timesteps, Modality modality,
                                            uint64_t seed);

// Median per-class window count over the training indices.
int default_n_aug(const std::vector<SensorWindow>& windows, const std::vector<int>& train_indices);

// Fine-tunes mu and g with the contrastive loss on mixed real + synthesized
// batches; prompts and attention maps stay frozen (prototypes are a snapshot).
std::vector<TrainLogEntry> finetune_with_augmentation(
    IotBranch& iot, TextBranch& text, const std::vector<SensorWindow>& windows,
    const std::vector<int>& train_indices, const std::vector<SensorWindow>& augmented,
    const TrainConfig& cfg, const std::string& log_path = "");

}  // namespace iotzsl
