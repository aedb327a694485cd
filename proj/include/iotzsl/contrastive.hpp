#pragma once

#include <string>
#include <vector>

#include "iotzsl/iot_branch.hpp"
#include "iotzsl/text_branch.hpp"

namespace iotzsl {

struct TrainConfig {
  double temperature = 0.2;
  int batch_size = 64;
  double learning_rate = 0.001;
  double momentum = 0.9;
  int epochs = 100;
  int steps_per_epoch = 0;  // 0: ceil(train size / batch size)
  uint64_t seed = 0;

  void validate() const {
    IOTZSL_REQUIRE(temperature > 0.0, ErrKind::config, "temperature must be > 0");
    IOTZSL_REQUIRE(batch_size >= 2, ErrKind::config, "batch_size must be >= 2");
    IOTZSL_REQUIRE(epochs >= 0, ErrKind::config, "epochs must be >= 0");
  }
};

// Supervised contrastive loss over a batch of embeddings and the prototypes
// of the batch's distinct classes. For sample i of class j the positives are
// the same-class samples plus the own prototype, averaged with weight
// 1/(|P(i)|+1); the log-partition sums exp(e_i.e_a/tau) over all other
// samples and exp(e_i.t_n/tau) + exp(t_j.t_n/tau) over all other batch
// classes. `labels[i]` is the prototype row of sample i.
//
// The tape variant assumes validated inputs; the plain overload validates
// (>=2 samples, >=2 distinct classes, unit-norm rows, labels in range) and
// optionally returns analytic gradients.
nn::Var supervised_contrastive_loss_var(nn::Tape& t, nn::Var embeddings, nn::Var prototypes,
                                        const std::vector<int>& labels, double tau);
double supervised_contrastive_loss(const Mat& embeddings, const std::vector<int>& labels,
                                   const Mat& prototypes, double tau, Mat* grad_e = nullptr,
                                   Mat* grad_t = nullptr);

// Embedding-only multi-positive contrastive loss (no prototypes); used by the
// noise-augmentation detection baseline.
nn::Var embedding_supcon_loss_var(nn::Tape& t, nn::Var embeddings,
                                  const std::vector<int>& labels, double tau);

// Class-balanced batch sampler: every batch covers >= 2 distinct classes and,
// when a class has enough windows, >= 2 samples of it.
std::vector<int> sample_contrastive_batch(const std::vector<int>& pool_indices,
                                          const std::vector<int>& pool_labels, int batch_size,
                                          Rng& rng);

struct TrainLogEntry {
  int epoch = 0;
  double mean_loss = 0.0;
  double wall_seconds = 0.0;
};

struct TrainOptions {
  // Update the soft prompt + cross-attention maps and recompute prototypes
  // every step. When false, `fixed_prototypes` supplies frozen rows instead.
  bool learn_text_branch = true;
  const Mat* fixed_prototypes = nullptr;
  std::string log_path;  // JSONL per-epoch records when non-empty
};

// Joint training of mu, g and (optionally) the text branch learnables with
// the supervised contrastive loss; the text encoder itself stays frozen.
// Labels of `train_indices` windows must be valid prototype rows.
std::vector<TrainLogEntry> train_contrastive(IotBranch& iot, TextBranch& text,
                                             const std::vector<SensorWindow>& windows,
                                             const std::vector<int>& train_indices,
                                             const TrainConfig& cfg,
                                             const TrainOptions& opts = {});

}  // namespace iotzsl
