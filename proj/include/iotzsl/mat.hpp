#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "iotzsl/error.hpp"

namespace iotzsl {

// Dense row-major matrix of doubles. The single numeric container of the
// library; row vectors are 1xN, column vectors Nx1.
class Mat {
 public:
  Mat() = default;
  Mat(int rows, int cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(static_cast<size_t>(rows) * cols, fill) {
    IOTZSL_REQUIRE(rows >= 0 && cols >= 0, ErrKind::validation,
                   "Mat dimensions must be non-negative");
  }

  static Mat row(std::vector<double> v) {
    Mat m;
    m.rows_ = 1;
    m.cols_ = static_cast<int>(v.size());
    m.data_ = std::move(v);
    return m;
  }

  static Mat col(std::vector<double> v) {
    Mat m = row(std::move(v));
    std::swap(m.rows_, m.cols_);
    return m;
  }

  static Mat identity(int n) {
    Mat m(n, n, 0.0);
    for (int i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  bool empty() const { return data_.empty(); }
  size_t size() const { return data_.size(); }

  double& operator()(int r, int c) { return data_[static_cast<size_t>(r) * cols_ + c]; }
  double operator()(int r, int c) const { return data_[static_cast<size_t>(r) * cols_ + c]; }
  double& operator[](size_t i) { return data_[i]; }
  double operator[](size_t i) const { return data_[i]; }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }

  void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

  bool same_shape(const Mat& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }

  Mat& operator+=(const Mat& o);
  Mat& operator-=(const Mat& o);
  Mat& operator*=(double s);

  std::string shape_str() const;

 private:
  int rows_ = 0;
  int cols_ = 0;
  std::vector<double> data_;
};

Mat operator+(Mat a, const Mat& b);
Mat operator-(Mat a, const Mat& b);
Mat operator*(Mat a, double s);
Mat operator*(double s, Mat a);

Mat hadamard(const Mat& a, const Mat& b);
// C = A * B
Mat matmul(const Mat& a, const Mat& b);
// C = A * B^T
Mat matmul_nt(const Mat& a, const Mat& b);
// C = A^T * B
Mat matmul_tn(const Mat& a, const Mat& b);
Mat transpose(const Mat& a);

double sum_all(const Mat& a);
double dot_all(const Mat& a, const Mat& b);
double row_norm(const Mat& a, int r);
bool all_finite(const Mat& a);

// L2-normalizes every row in place; rows with norm < eps are left unchanged.
void l2_normalize_rows(Mat& a, double eps = 1e-12);

Mat concat_rows(const std::vector<Mat>& parts);
Mat slice_rows(const Mat& a, int r0, int r1);

}  // namespace iotzsl
