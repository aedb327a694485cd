#include "iotzsl/gzsl.hpp"

namespace iotzsl {

int zsl_predict(const Mat& e_row, const Mat& prototypes,
                const std::vector<int>& unseen_classes) {
  IOTZSL_REQUIRE(!unseen_classes.empty(), ErrKind::config,
                 "zsl_predict: the unseen class set is empty");
  IOTZSL_REQUIRE(e_row.rows() == 1 && e_row.cols() == prototypes.cols(), ErrKind::validation,
                 "zsl_predict: embedding/prototype dimension mismatch");
  int best = -1;
  double best_score = 0.0;
  for (int cls : unseen_classes) {
    IOTZSL_REQUIRE(cls >= 0 && cls < prototypes.rows(), ErrKind::validation,
                   "zsl_predict: class " + std::to_string(cls) + " has no prototype row");
    double s = 0.0;
    for (int j = 0; j < e_row.cols(); ++j) s += e_row(0, j) * prototypes(cls, j);
    if (best < 0 || s > best_score || (s == best_score && cls < best)) {
      best = cls;
      best_score = s;
    }
  }
  return best;
}

int match_all_prototypes(const Mat& e_row, const Mat& prototypes) {
  int best = 0;
  double best_score = 0.0;
  for (int cls = 0; cls < prototypes.rows(); ++cls) {
    double s = 0.0;
    for (int j = 0; j < e_row.cols(); ++j) s += e_row(0, j) * prototypes(cls, j);
    if (cls == 0 || s > best_score) {
      best = cls;
      best_score = s;
    }
  }
  return best;
}

void GzslSystem::validate() const {
  IOTZSL_REQUIRE(iot != nullptr && specialist != nullptr && detector != nullptr,
                 ErrKind::state, "gzsl system is missing a component");
  IOTZSL_REQUIRE(detector->calibrated, ErrKind::state, "gzsl system: detector is uncalibrated");
  IOTZSL_REQUIRE(specialist->head.trained, ErrKind::state, "gzsl system: specialist untrained");
  IOTZSL_REQUIRE(!unseen_classes.empty(), ErrKind::config, "gzsl system: no unseen classes");
  IOTZSL_REQUIRE(prototypes.rows() > 0, ErrKind::state, "gzsl system: no prototypes");
}

Decision classify(const SensorWindow& x, const GzslSystem& sys) {
  sys.validate();
  const Mat e = sys.iot->embed(x);
  Decision d;
  if (detect(e, *sys.detector) == Detection::seen) {
    d.route = Route::edge_seen;
    d.label = sys.specialist->predict(sys.iot->encoder, x);
  } else {
    d.route = Route::cloud_unseen;
    d.label = zsl_predict(e, sys.prototypes, sys.unseen_classes);
  }
  return d;
}

RouteReport route_report(const std::vector<SensorWindow>& windows,
                         const std::vector<int>& indices, const std::vector<bool>& true_seen,
                         const GzslSystem& sys) {
  IOTZSL_REQUIRE(indices.size() == true_seen.size(), ErrKind::validation,
                 "route_report: indices/flags size mismatch");
  RouteReport r;
  for (size_t i = 0; i < indices.size(); ++i) {
    const Decision d = classify(windows[static_cast<size_t>(indices[i])], sys);
    if (true_seen[i]) {
      ++r.true_seen_total;
      (d.route == Route::edge_seen ? r.seen_to_edge : r.seen_to_cloud) += 1;
    } else {
      ++r.true_unseen_total;
      (d.route == Route::edge_seen ? r.unseen_to_edge : r.unseen_to_cloud) += 1;
    }
  }
  return r;
}

}  // namespace iotzsl
