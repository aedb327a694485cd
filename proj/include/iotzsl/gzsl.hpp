#pragma once

#include <vector>

#include "iotzsl/iot_branch.hpp"
#include "iotzsl/openset.hpp"

namespace iotzsl {

enum class Route { edge_seen, cloud_unseen };

// Highest-dot-product prototype among the unseen classes; ties break to the
// lowest class id. Both the embedding and prototype rows are unit-norm.
int zsl_predict(const Mat& e_row, const Mat& prototypes, const std::vector<int>& unseen_classes);

// Arg-max over every prototype row (the no-open-set matching path).
int match_all_prototypes(const Mat& e_row, const Mat& prototypes);

// Read-only bundle of published state for inference.
struct GzslSystem {
  IotBranch* iot = nullptr;              // final mu + g
  const Specialist* specialist = nullptr;
  const ClusterStore* detector = nullptr;
  Mat prototypes;                        // [N_c x d] frozen, row = class id
  std::vector<int> unseen_classes;

  void validate() const;
};

struct Decision {
  Route route = Route::edge_seen;
  int label = -1;
};

// Embed, detect, then either the edge specialist (seen) or prototype matching
// over the unseen classes (cloud).
Decision classify(const SensorWindow& x, const GzslSystem& sys);

struct RouteReport {
  long true_seen_total = 0;
  long true_unseen_total = 0;
  long seen_to_edge = 0;
  long seen_to_cloud = 0;
  long unseen_to_edge = 0;
  long unseen_to_cloud = 0;

  double cloud_fraction() const {
    const long total = true_seen_total + true_unseen_total;
    return total == 0 ? 0.0 : static_cast<double>(seen_to_cloud + unseen_to_cloud) / total;
  }
};

// Routing statistics over a labeled test set; `true_seen[i]` flags whether
// window i's class is a seen class of the active fold.
RouteReport route_report(const std::vector<SensorWindow>& windows,
                         const std::vector<int>& indices, const std::vector<bool>& true_seen,
                         const GzslSystem& sys);

}  // namespace iotzsl
