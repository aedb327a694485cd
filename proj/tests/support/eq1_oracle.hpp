#pragma once

#include <cmath>
#include <vector>

#include "iotzsl/mat.hpp"

namespace testsupport {

// Literal term-by-term summation of the supervised contrastive loss, written
// directly over the similarity matrices so tests can also probe monotonicity
// with everything else held fixed. Kept independent of the library's
// mask/tape implementation.
inline double supcon_loss_from_sims(const iotzsl::Mat& s_ee, const iotzsl::Mat& s_et,
                                    const iotzsl::Mat& s_tt, const std::vector<int>& labels) {
  const int n_b = s_ee.rows();
  const int n_t = s_tt.rows();
  double total = 0.0;
  for (int i = 0; i < n_b; ++i) {
    const int j = labels[static_cast<size_t>(i)];
    // positives: same-class samples plus the own prototype
    double pos = 0.0;
    int p_count = 0;
    for (int p = 0; p < n_b; ++p) {
      if (p == i) continue;
      if (labels[static_cast<size_t>(p)] == labels[static_cast<size_t>(i)]) {
        pos += s_ee(i, p);
        ++p_count;
      }
    }
    pos += s_et(i, j);
    const double align = pos / (p_count + 1);

    double z = 0.0;
    for (int a = 0; a < n_b; ++a)
      if (a != i) z += std::exp(s_ee(i, a));
    for (int n = 0; n < n_t; ++n) {
      if (n == j) continue;
      z += std::exp(s_et(i, n));
      z += std::exp(s_tt(j, n));
    }
    total += -align + std::log(z);
  }
  return total;
}

inline double supcon_loss_oracle(const iotzsl::Mat& e, const std::vector<int>& labels,
                                 const iotzsl::Mat& t, double tau) {
  using iotzsl::matmul_nt;
  iotzsl::Mat s_ee = matmul_nt(e, e) * (1.0 / tau);
  iotzsl::Mat s_et = matmul_nt(e, t) * (1.0 / tau);
  iotzsl::Mat s_tt = matmul_nt(t, t) * (1.0 / tau);
  return supcon_loss_from_sims(s_ee, s_et, s_tt, labels);
}

}  // namespace testsupport
