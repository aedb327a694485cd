#pragma once

#include <map>
#include <string>
#include <vector>

#include "iotzsl/contrastive.hpp"
#include "iotzsl/gzsl.hpp"

namespace iotzsl {

// Ablation switches of the three stages.
struct AblationFlags {
  bool prompt_engineering = true;  // off: fixed-template prototypes
  bool open_set = true;            // off: argmax over all prototypes, no routing
  bool data_augmentation = true;   // off: skip the GAN and fine-tuning

  std::string tag() const;
};

struct DetectionMetrics {
  double precision = 0.0;  // support-weighted over {seen, unseen}
  double recall = 0.0;
  double f1 = 0.0;
};

DetectionMetrics detection_metrics(const std::vector<Detection>& predictions,
                                   const std::vector<bool>& true_seen);

struct GzslMetrics {
  double acc_seen = 0.0;
  double acc_unseen = 0.0;
  double acc_harmonic = 0.0;
};

double harmonic_mean_accuracy(double acc_seen, double acc_unseen);

// Support-weighted per-class recalls averaged within the seen and unseen
// groups; classes without test samples are excluded with a warning.
GzslMetrics gzsl_metrics(const std::vector<int>& predictions, const std::vector<int>& truth,
                         const std::vector<int>& seen_classes,
                         const std::vector<int>& unseen_classes);

struct FoldReport {
  int fold_index = 0;
  AblationFlags flags;
  DetectionMetrics detection;
  GzslMetrics gzsl;
  double cloud_fraction = 0.0;
};

struct AggregateStat {
  double mean = 0.0;
  double variance = 0.0;  // population variance over folds
};

struct MetricsReport {
  std::vector<FoldReport> folds;
  std::map<std::string, AggregateStat> aggregate;  // metric name -> stat
};

MetricsReport kfold_aggregate(const std::vector<FoldReport>& folds);

// --- detection baselines ---------------------------------------------------

// Largest threshold keeping at least fraction p of the scores >= it (the
// keep-high mirror of the detector's ceiling-index quantile).
double keep_high_threshold(std::vector<double> scores, double p);

// Maximum softmax probability of the supervised specialist.
Detection baseline_msp(double max_softmax_prob, double threshold);

// k-th nearest neighbor distance against a single pooled training set.
struct KnnBaselineState {
  IotBranch model;  // separate contrastive model with noise-augmented positives
  Mat train_embeddings;
  int k = 1;
  double threshold = -1.0;
};

struct KnnBaselineConfig {
  TrainConfig train;
  double noise_std = 0.1;
  double k_fraction = 0.08;
  double retention = 0.8;
};

double knn_baseline_score(const Mat& e_row, const KnnBaselineState& state);
Detection baseline_knn(const Mat& e_row, const KnnBaselineState& state);

// Trains the noise-positive contrastive embedding model and calibrates the
// global threshold on the seen validation windows.
KnnBaselineState train_knn_baseline(const std::vector<SensorWindow>& windows,
                                    const std::vector<int>& train_indices,
                                    const std::vector<int>& val_indices,
                                    const IotEncoderConfig& encoder_cfg, int embed_dim,
                                    const KnnBaselineConfig& cfg);

// Softmax-scaled maximum similarity against fixed-template seen prototypes.
struct McmBaselineState {
  Mat seen_prototypes;  // [n_seen x d], fixed template, unit rows
  double temperature = 1.0;
  double threshold = -1.0;
};

double mcm_score(const Mat& e_row, const McmBaselineState& state);
Detection baseline_mcm(const Mat& e_row, const McmBaselineState& state);

}  // namespace iotzsl
