#include "iotzsl/mat.hpp"

#include <cmath>

namespace iotzsl {

namespace {
void require_same_shape(const Mat& a, const Mat& b, const char* op) {
  IOTZSL_REQUIRE(a.same_shape(b), ErrKind::validation,
                 std::string(op) + ": shape mismatch " + a.shape_str() + " vs " + b.shape_str());
}
}  // namespace

std::string Mat::shape_str() const {
  return "[" + std::to_string(rows_) + "x" + std::to_string(cols_) + "]";
}

Mat& Mat::operator+=(const Mat& o) {
  require_same_shape(*this, o, "Mat+=");
  for (size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
  return *this;
}

Mat& Mat::operator-=(const Mat& o) {
  require_same_shape(*this, o, "Mat-=");
  for (size_t i = 0; i < data_.size(); ++i) data_[i] -= o.data_[i];
  return *this;
}

Mat& Mat::operator*=(double s) {
  for (auto& v : data_) v *= s;
  return *this;
}

Mat operator+(Mat a, const Mat& b) { a += b; return a; }
Mat operator-(Mat a, const Mat& b) { a -= b; return a; }
Mat operator*(Mat a, double s) { a *= s; return a; }
Mat operator*(double s, Mat a) { a *= s; return a; }

Mat hadamard(const Mat& a, const Mat& b) {
  require_same_shape(a, b, "hadamard");
  Mat c = a;
  for (size_t i = 0; i < c.size(); ++i) c[i] *= b[i];
  return c;
}

Mat matmul(const Mat& a, const Mat& b) {
  IOTZSL_REQUIRE(a.cols() == b.rows(), ErrKind::validation,
                 "matmul: inner dimensions differ " + a.shape_str() + " vs " + b.shape_str());
  Mat c(a.rows(), b.cols(), 0.0);
  const int n = a.rows(), k = a.cols(), m = b.cols();
  for (int i = 0; i < n; ++i) {
    for (int p = 0; p < k; ++p) {
      const double aip = a(i, p);
      if (aip == 0.0) continue;
      const double* brow = b.data() + static_cast<size_t>(p) * m;
      double* crow = c.data() + static_cast<size_t>(i) * m;
      for (int j = 0; j < m; ++j) crow[j] += aip * brow[j];
    }
  }
  return c;
}

Mat matmul_nt(const Mat& a, const Mat& b) {
  IOTZSL_REQUIRE(a.cols() == b.cols(), ErrKind::validation,
                 "matmul_nt: column counts differ " + a.shape_str() + " vs " + b.shape_str());
  Mat c(a.rows(), b.rows(), 0.0);
  const int n = a.rows(), k = a.cols(), m = b.rows();
  for (int i = 0; i < n; ++i) {
    const double* arow = a.data() + static_cast<size_t>(i) * k;
    for (int j = 0; j < m; ++j) {
      const double* brow = b.data() + static_cast<size_t>(j) * k;
      double s = 0.0;
      for (int p = 0; p < k; ++p) s += arow[p] * brow[p];
      c(i, j) = s;
    }
  }
  return c;
}

Mat matmul_tn(const Mat& a, const Mat& b) {
  IOTZSL_REQUIRE(a.rows() == b.rows(), ErrKind::validation,
                 "matmul_tn: row counts differ " + a.shape_str() + " vs " + b.shape_str());
  Mat c(a.cols(), b.cols(), 0.0);
  const int n = a.cols(), k = a.rows(), m = b.cols();
  for (int p = 0; p < k; ++p) {
    const double* arow = a.data() + static_cast<size_t>(p) * n;
    const double* brow = b.data() + static_cast<size_t>(p) * m;
    for (int i = 0; i < n; ++i) {
      const double aip = arow[i];
      if (aip == 0.0) continue;
      double* crow = c.data() + static_cast<size_t>(i) * m;
      for (int j = 0; j < m; ++j) crow[j] += aip * brow[j];
    }
  }
  return c;
}

Mat transpose(const Mat& a) {
  Mat c(a.cols(), a.rows());
  for (int i = 0; i < a.rows(); ++i)
    for (int j = 0; j < a.cols(); ++j) c(j, i) = a(i, j);
  return c;
}

double sum_all(const Mat& a) {
  double s = 0.0;
  for (size_t i = 0; i < a.size(); ++i) s += a[i];
  return s;
}

double dot_all(const Mat& a, const Mat& b) {
  require_same_shape(a, b, "dot_all");
  double s = 0.0;
  for (size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double row_norm(const Mat& a, int r) {
  double s = 0.0;
  for (int j = 0; j < a.cols(); ++j) s += a(r, j) * a(r, j);
  return std::sqrt(s);
}

bool all_finite(const Mat& a) {
  for (size_t i = 0; i < a.size(); ++i)
    if (!std::isfinite(a[i])) return false;
  return true;
}

void l2_normalize_rows(Mat& a, double eps) {
  for (int r = 0; r < a.rows(); ++r) {
    const double n = row_norm(a, r);
    if (n < eps) continue;
    for (int j = 0; j < a.cols(); ++j) a(r, j) /= n;
  }
}

Mat concat_rows(const std::vector<Mat>& parts) {
  IOTZSL_REQUIRE(!parts.empty(), ErrKind::validation, "concat_rows: no parts");
  int cols = parts[0].cols();
  int rows = 0;
  for (const auto& p : parts) {
    IOTZSL_REQUIRE(p.cols() == cols, ErrKind::validation, "concat_rows: column mismatch");
    rows += p.rows();
  }
  Mat c(rows, cols);
  int r = 0;
  for (const auto& p : parts) {
    for (int i = 0; i < p.rows(); ++i, ++r)
      for (int j = 0; j < cols; ++j) c(r, j) = p(i, j);
  }
  return c;
}

Mat slice_rows(const Mat& a, int r0, int r1) {
  IOTZSL_REQUIRE(0 <= r0 && r0 <= r1 && r1 <= a.rows(), ErrKind::validation,
                 "slice_rows: bad range");
  Mat c(r1 - r0, a.cols());
  for (int i = r0; i < r1; ++i)
    for (int j = 0; j < a.cols(); ++j) c(i - r0, j) = a(i, j);
  return c;
}

}  // namespace iotzsl
