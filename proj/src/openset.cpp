#include "iotzsl/openset.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "iotzsl/archive.hpp"

#include <json.hpp>

using nlohmann::json;

namespace iotzsl {

const ClusterStore::Cluster* ClusterStore::find(int class_id) const {
  for (const auto& c : clusters)
    if (c.class_id == class_id) return &c;
  return nullptr;
}

ClusterStore build_clusters(const Mat& train_embeddings, const std::vector<int>& labels,
                            double k_fraction) {
  IOTZSL_REQUIRE(train_embeddings.rows() == static_cast<int>(labels.size()), ErrKind::validation,
                 "build_clusters: embeddings/labels size mismatch");
  IOTZSL_REQUIRE(train_embeddings.rows() > 0, ErrKind::validation,
                 "build_clusters: empty training embeddings");
  IOTZSL_REQUIRE(k_fraction > 0.0, ErrKind::validation, "build_clusters: k_fraction must be > 0");

  std::map<int, std::vector<int>> by_class;
  for (size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(static_cast<int>(i));

  ClusterStore store;
  store.k_fraction = k_fraction;
  for (const auto& [class_id, rows] : by_class) {
    IOTZSL_REQUIRE(!rows.empty(), ErrKind::validation,
                   "build_clusters: class " + std::to_string(class_id) + " is empty");
    ClusterStore::Cluster c;
    c.class_id = class_id;
    c.members = Mat(static_cast<int>(rows.size()), train_embeddings.cols());
    for (size_t r = 0; r < rows.size(); ++r)
      for (int j = 0; j < train_embeddings.cols(); ++j)
        c.members(static_cast<int>(r), j) = train_embeddings(rows[r], j);
    c.k = std::max(1, static_cast<int>(std::lround(k_fraction * static_cast<double>(rows.size()))));
    store.clusters.push_back(std::move(c));
  }
  return store;
}

double kth_distance(const Mat& e_row, const ClusterStore::Cluster& cluster) {
  IOTZSL_REQUIRE(cluster.members.rows() >= 1, ErrKind::validation, "kth_distance: empty cluster");
  IOTZSL_REQUIRE(e_row.rows() == 1 && e_row.cols() == cluster.members.cols(), ErrKind::validation,
                 "kth_distance: embedding shape mismatch");
  const int k = std::min(cluster.k, cluster.members.rows());
  std::vector<double> dists(static_cast<size_t>(cluster.members.rows()));
  for (int i = 0; i < cluster.members.rows(); ++i) {
    double s = 0.0;
    for (int j = 0; j < e_row.cols(); ++j) {
      const double diff = e_row(0, j) - cluster.members(i, j);
      s += diff * diff;
    }
    dists[static_cast<size_t>(i)] = std::sqrt(s);
  }
  std::nth_element(dists.begin(), dists.begin() + (k - 1), dists.end());
  return dists[static_cast<size_t>(k - 1)];
}

double empirical_quantile_ceiling(std::vector<double> scores, double p) {
  IOTZSL_REQUIRE(!scores.empty(), ErrKind::validation, "quantile of empty score set");
  IOTZSL_REQUIRE(p > 0.0 && p <= 1.0, ErrKind::validation, "quantile p must be in (0,1]");
  std::sort(scores.begin(), scores.end());
  const auto n = static_cast<double>(scores.size());
  size_t idx = static_cast<size_t>(std::ceil(p * n));
  idx = std::max<size_t>(1, std::min(idx, scores.size()));
  return scores[idx - 1];
}

void calibrate(ClusterStore& store, const Mat& val_embeddings, const std::vector<int>& val_labels,
               double p) {
  IOTZSL_REQUIRE(val_embeddings.rows() == static_cast<int>(val_labels.size()),
                 ErrKind::validation, "calibrate: embeddings/labels size mismatch");
  std::map<int, std::vector<int>> by_class;
  for (size_t i = 0; i < val_labels.size(); ++i)
    by_class[val_labels[i]].push_back(static_cast<int>(i));

  for (auto& cluster : store.clusters) {
    std::vector<double> scores;
    const auto it = by_class.find(cluster.class_id);
    if (it != by_class.end()) {
      for (int row : it->second) {
        Mat e(1, val_embeddings.cols());
        for (int j = 0; j < e.cols(); ++j) e(0, j) = val_embeddings(row, j);
        scores.push_back(kth_distance(e, cluster));
      }
    } else {
      warn("calibrate: class " + std::to_string(cluster.class_id) +
           " absent from the validation set; using train-member scores");
      for (int i = 0; i < cluster.members.rows(); ++i) {
        Mat e(1, cluster.members.cols());
        for (int j = 0; j < e.cols(); ++j) e(0, j) = cluster.members(i, j);
        scores.push_back(kth_distance(e, cluster));
      }
    }
    cluster.lambda = empirical_quantile_ceiling(scores, p);
  }
  store.retention_target = p;
  store.calibrated = true;
}

int cluster_votes(const Mat& e_row, const ClusterStore& store) {
  IOTZSL_REQUIRE(store.calibrated, ErrKind::state, "detector used before calibration");
  int q = 0;
  for (const auto& cluster : store.clusters)
    if (kth_distance(e_row, cluster) <= cluster.lambda) ++q;
  return q;
}

Detection detect(const Mat& e_row, const ClusterStore& store) {
  return cluster_votes(e_row, store) == 0 ? Detection::unseen : Detection::seen;
}

std::vector<Detection> detect_batch(const Mat& embeddings, const ClusterStore& store) {
  std::vector<Detection> out;
  out.reserve(static_cast<size_t>(embeddings.rows()));
  for (int i = 0; i < embeddings.rows(); ++i) {
    Mat e(1, embeddings.cols());
    for (int j = 0; j < embeddings.cols(); ++j) e(0, j) = embeddings(i, j);
    out.push_back(detect(e, store));
  }
  return out;
}

void ClusterStore::save(const std::string& path) const {
  TensorArchive ar;
  json meta;
  meta["retention_target"] = retention_target;
  meta["k_fraction"] = k_fraction;
  meta["model_fingerprint"] = model_fingerprint;
  meta["calibrated"] = calibrated;
  json cluster_meta = json::array();
  for (size_t i = 0; i < clusters.size(); ++i) {
    const auto& c = clusters[i];
    ar.tensors["cluster" + std::to_string(i) + ".members"] = c.members;
    cluster_meta.push_back({{"class_id", c.class_id}, {"k", c.k}, {"lambda", c.lambda}});
  }
  meta["clusters"] = cluster_meta;
  ar.blobs["meta"] = meta.dump();
  ar.save(path);
}

ClusterStore ClusterStore::load(const std::string& path, uint64_t expected_fingerprint) {
  TensorArchive ar = TensorArchive::load(path);
  const json meta = json::parse(ar.blob("meta"));
  ClusterStore store;
  store.retention_target = meta.at("retention_target").get<double>();
  store.k_fraction = meta.at("k_fraction").get<double>();
  store.model_fingerprint = meta.at("model_fingerprint").get<uint64_t>();
  store.calibrated = meta.at("calibrated").get<bool>();
  const auto& cm = meta.at("clusters");
  for (size_t i = 0; i < cm.size(); ++i) {
    Cluster c;
    c.class_id = cm[i].at("class_id").get<int>();
    c.k = cm[i].at("k").get<int>();
    c.lambda = cm[i].at("lambda").get<double>();
    c.members = ar.tensor("cluster" + std::to_string(i) + ".members");
    store.clusters.push_back(std::move(c));
  }
  IOTZSL_REQUIRE(expected_fingerprint == 0 || store.model_fingerprint == expected_fingerprint,
                 ErrKind::state,
                 "detector state was calibrated against a different checkpoint (fingerprint "
                 "mismatch)");
  return store;
}

}  // namespace iotzsl
