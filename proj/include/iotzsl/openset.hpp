#pragma once

#include <string>
#include <vector>

#include "iotzsl/mat.hpp"

namespace iotzsl {

enum class Detection { seen, unseen };

// Per-seen-class embedding clusters with k-th-distance thresholds. Embeddings
// are stored as produced by the final feature extractor + projector
// (unit-norm rows); the store is immutable once calibrated.
struct ClusterStore {
  struct Cluster {
    int class_id = -1;
    Mat members;  // [N_i x d]
    int k = 1;
    double lambda = -1.0;  // calibrated threshold; < 0 while uncalibrated
  };

  std::vector<Cluster> clusters;  // ascending class_id
  double retention_target = 0.8;
  double k_fraction = 0.08;
  uint64_t model_fingerprint = 0;
  bool calibrated = false;

  const Cluster* find(int class_id) const;

  void save(const std::string& path) const;
  // Verifies the stored fingerprint against `expected_fingerprint` when
  // non-zero; a mismatch means the detector was calibrated for another model.
  static ClusterStore load(const std::string& path, uint64_t expected_fingerprint = 0);
};

// One cluster per seen class with k_i = max(1, round(k_fraction * N_i)).
ClusterStore build_clusters(const Mat& train_embeddings, const std::vector<int>& labels,
                            double k_fraction);

// k-th smallest Euclidean distance from e_row to the cluster's members.
double kth_distance(const Mat& e_row, const ClusterStore::Cluster& cluster);

// Smallest score s in `scores` such that at least fraction p of the scores
// are <= s (ceiling-index order statistic).
double empirical_quantile_ceiling(std::vector<double> scores, double p);

// Sets each lambda_i to the p-quantile of the class's own validation scores;
// classes absent from the validation set fall back to their train-member
// scores with a warning.
void calibrate(ClusterStore& store, const Mat& val_embeddings,
               const std::vector<int>& val_labels, double p);

// Number of clusters whose threshold admits the sample.
int cluster_votes(const Mat& e_row, const ClusterStore& store);

// Unseen iff no cluster admits the sample.
Detection detect(const Mat& e_row, const ClusterStore& store);
std::vector<Detection> detect_batch(const Mat& embeddings, const ClusterStore& store);

}  // namespace iotzsl
