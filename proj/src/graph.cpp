#include "iotzsl/graph.hpp"

#include <cmath>

namespace iotzsl::nn {

namespace {
constexpr double kSqrt2 = 1.41421356237309514547;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;
}  // namespace

Var Tape::push(Mat val, std::function<void(Tape&, int)> back) {
  Node n;
  n.val = std::move(val);
  n.back = std::move(back);
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

Var Tape::constant(Mat v) { return push(std::move(v), nullptr); }

Var Tape::add(Var a, Var b) {
  Mat out = val(a) + val(b);
  return push(std::move(out), [a, b](Tape& t, int self) {
    t.grad_mut(a.id) += t.grad(Var{self});
    t.grad_mut(b.id) += t.grad(Var{self});
  });
}

Var Tape::sub(Var a, Var b) {
  Mat out = val(a) - val(b);
  return push(std::move(out), [a, b](Tape& t, int self) {
    t.grad_mut(a.id) += t.grad(Var{self});
    t.grad_mut(b.id) -= t.grad(Var{self});
  });
}

Var Tape::add_rowvec(Var a, Var v) {
  const Mat& x = val(a);
  const Mat& r = val(v);
  IOTZSL_REQUIRE(r.rows() == 1 && r.cols() == x.cols(), ErrKind::validation,
                 "add_rowvec: shape mismatch");
  Mat out = x;
  for (int i = 0; i < out.rows(); ++i)
    for (int j = 0; j < out.cols(); ++j) out(i, j) += r(0, j);
  return push(std::move(out), [a, v](Tape& t, int self) {
    const Mat& g = t.grad(Var{self});
    t.grad_mut(a.id) += g;
    Mat& gv = t.grad_mut(v.id);
    for (int i = 0; i < g.rows(); ++i)
      for (int j = 0; j < g.cols(); ++j) gv(0, j) += g(i, j);
  });
}

Var Tape::mul_rowvec(Var a, Var v) {
  const Mat& x = val(a);
  const Mat& r = val(v);
  IOTZSL_REQUIRE(r.rows() == 1 && r.cols() == x.cols(), ErrKind::validation,
                 "mul_rowvec: shape mismatch");
  Mat out = x;
  for (int i = 0; i < out.rows(); ++i)
    for (int j = 0; j < out.cols(); ++j) out(i, j) *= r(0, j);
  return push(std::move(out), [a, v](Tape& t, int self) {
    const Mat& g = t.grad(Var{self});
    const Mat& x = t.val(a);
    const Mat& r = t.val(v);
    Mat& ga = t.grad_mut(a.id);
    Mat& gv = t.grad_mut(v.id);
    for (int i = 0; i < g.rows(); ++i)
      for (int j = 0; j < g.cols(); ++j) {
        ga(i, j) += g(i, j) * r(0, j);
        gv(0, j) += g(i, j) * x(i, j);
      }
  });
}

Var Tape::scale(Var a, double s) {
  Mat out = val(a) * s;
  return push(std::move(out), [a, s](Tape& t, int self) {
    t.grad_mut(a.id) += t.grad(Var{self}) * s;
  });
}

Var Tape::mul(Var a, Var b) {
  Mat out = hadamard(val(a), val(b));
  return push(std::move(out), [a, b](Tape& t, int self) {
    const Mat& g = t.grad(Var{self});
    t.grad_mut(a.id) += hadamard(g, t.val(b));
    t.grad_mut(b.id) += hadamard(g, t.val(a));
  });
}

Var Tape::mul_const(Var a, Mat mask) {
  Mat out = hadamard(val(a), mask);
  return push(std::move(out), [a, mask = std::move(mask)](Tape& t, int self) {
    t.grad_mut(a.id) += hadamard(t.grad(Var{self}), mask);
  });
}

Var Tape::matmul(Var a, Var b) {
  Mat out = iotzsl::matmul(val(a), val(b));
  return push(std::move(out), [a, b](Tape& t, int self) {
    const Mat& g = t.grad(Var{self});
    t.grad_mut(a.id) += iotzsl::matmul_nt(g, t.val(b));
    t.grad_mut(b.id) += iotzsl::matmul_tn(t.val(a), g);
  });
}

Var Tape::matmul_nt(Var a, Var b) {
  Mat out = iotzsl::matmul_nt(val(a), val(b));
  return push(std::move(out), [a, b](Tape& t, int self) {
    const Mat& g = t.grad(Var{self});
    t.grad_mut(a.id) += iotzsl::matmul(g, t.val(b));
    t.grad_mut(b.id) += iotzsl::matmul_tn(g, t.val(a));
  });
}

Var Tape::matmul_tn(Var a, Var b) {
  Mat out = iotzsl::matmul_tn(val(a), val(b));
  return push(std::move(out), [a, b](Tape& t, int self) {
    const Mat& g = t.grad(Var{self});
    t.grad_mut(a.id) += iotzsl::matmul_nt(t.val(b), g);
    t.grad_mut(b.id) += iotzsl::matmul(t.val(a), g);
  });
}

Var Tape::concat_rows(const std::vector<Var>& parts) {
  std::vector<Mat> vals;
  vals.reserve(parts.size());
  for (Var p : parts) vals.push_back(val(p));
  Mat out = iotzsl::concat_rows(vals);
  return push(std::move(out), [parts](Tape& t, int self) {
    const Mat& g = t.grad(Var{self});
    int r = 0;
    for (Var p : parts) {
      Mat& gp = t.grad_mut(p.id);
      for (int i = 0; i < gp.rows(); ++i, ++r)
        for (int j = 0; j < gp.cols(); ++j) gp(i, j) += g(r, j);
    }
  });
}

Var Tape::concat_cols(const std::vector<Var>& parts) {
  IOTZSL_REQUIRE(!parts.empty(), ErrKind::validation, "concat_cols: no parts");
  const int rows = val(parts[0]).rows();
  int cols = 0;
  for (Var p : parts) {
    IOTZSL_REQUIRE(val(p).rows() == rows, ErrKind::validation, "concat_cols: row mismatch");
    cols += val(p).cols();
  }
  Mat out(rows, cols);
  int c0 = 0;
  for (Var p : parts) {
    const Mat& m = val(p);
    for (int i = 0; i < rows; ++i)
      for (int j = 0; j < m.cols(); ++j) out(i, c0 + j) = m(i, j);
    c0 += m.cols();
  }
  return push(std::move(out), [parts](Tape& t, int self) {
    const Mat& g = t.grad(Var{self});
    int c0 = 0;
    for (Var p : parts) {
      Mat& gp = t.grad_mut(p.id);
      for (int i = 0; i < gp.rows(); ++i)
        for (int j = 0; j < gp.cols(); ++j) gp(i, j) += g(i, c0 + j);
      c0 += gp.cols();
    }
  });
}

Var Tape::slice_rows(Var a, int r0, int r1) {
  Mat out = iotzsl::slice_rows(val(a), r0, r1);
  return push(std::move(out), [a, r0](Tape& t, int self) {
    const Mat& g = t.grad(Var{self});
    Mat& ga = t.grad_mut(a.id);
    for (int i = 0; i < g.rows(); ++i)
      for (int j = 0; j < g.cols(); ++j) ga(r0 + i, j) += g(i, j);
  });
}

Var Tape::softmax_rows(Var a) {
  const Mat& x = val(a);
  Mat out(x.rows(), x.cols());
  for (int i = 0; i < x.rows(); ++i) {
    double mx = x(i, 0);
    for (int j = 1; j < x.cols(); ++j) mx = std::max(mx, x(i, j));
    double z = 0.0;
    for (int j = 0; j < x.cols(); ++j) {
      out(i, j) = std::exp(x(i, j) - mx);
      z += out(i, j);
    }
    for (int j = 0; j < x.cols(); ++j) out(i, j) /= z;
  }
  return push(std::move(out), [a](Tape& t, int self) {
    const Mat& g = t.grad(Var{self});
    const Mat& y = t.val(Var{self});
    Mat& ga = t.grad_mut(a.id);
    for (int i = 0; i < g.rows(); ++i) {
      double gy = 0.0;
      for (int j = 0; j < g.cols(); ++j) gy += g(i, j) * y(i, j);
      for (int j = 0; j < g.cols(); ++j) ga(i, j) += y(i, j) * (g(i, j) - gy);
    }
  });
}

Var Tape::layernorm_rows(Var a, double eps) {
  const Mat& x = val(a);
  const int C = x.cols();
  Mat out(x.rows(), C);
  Mat inv_sigma(x.rows(), 1);
  for (int i = 0; i < x.rows(); ++i) {
    double mu = 0.0;
    for (int j = 0; j < C; ++j) mu += x(i, j);
    mu /= C;
    double var = 0.0;
    for (int j = 0; j < C; ++j) {
      const double d = x(i, j) - mu;
      var += d * d;
    }
    var /= C;
    const double is = 1.0 / std::sqrt(var + eps);
    inv_sigma(i, 0) = is;
    for (int j = 0; j < C; ++j) out(i, j) = (x(i, j) - mu) * is;
  }
  return push(std::move(out), [a, inv_sigma = std::move(inv_sigma)](Tape& t, int self) {
    const Mat& g = t.grad(Var{self});
    const Mat& y = t.val(Var{self});
    Mat& ga = t.grad_mut(a.id);
    const int C = g.cols();
    for (int i = 0; i < g.rows(); ++i) {
      double gmean = 0.0, gymean = 0.0;
      for (int j = 0; j < C; ++j) {
        gmean += g(i, j);
        gymean += g(i, j) * y(i, j);
      }
      gmean /= C;
      gymean /= C;
      const double is = inv_sigma(i, 0);
      for (int j = 0; j < C; ++j)
        ga(i, j) += is * (g(i, j) - gmean - y(i, j) * gymean);
    }
  });
}

Var Tape::l2normalize_rows(Var a, double eps) {
  const Mat& x = val(a);
  Mat out = x;
  Mat norms(x.rows(), 1);
  for (int i = 0; i < x.rows(); ++i) {
    const double n = row_norm(x, i);
    norms(i, 0) = n;
    if (n >= eps)
      for (int j = 0; j < x.cols(); ++j) out(i, j) /= n;
  }
  return push(std::move(out), [a, eps, norms = std::move(norms)](Tape& t, int self) {
    const Mat& g = t.grad(Var{self});
    const Mat& y = t.val(Var{self});
    Mat& ga = t.grad_mut(a.id);
    for (int i = 0; i < g.rows(); ++i) {
      const double n = norms(i, 0);
      if (n < eps) {  // degenerate row passed through unchanged
        for (int j = 0; j < g.cols(); ++j) ga(i, j) += g(i, j);
        continue;
      }
      double yg = 0.0;
      for (int j = 0; j < g.cols(); ++j) yg += y(i, j) * g(i, j);
      for (int j = 0; j < g.cols(); ++j) ga(i, j) += (g(i, j) - y(i, j) * yg) / n;
    }
  });
}

Var Tape::relu(Var a) {
  Mat out = val(a);
  for (size_t i = 0; i < out.size(); ++i) out[i] = out[i] > 0.0 ? out[i] : 0.0;
  return push(std::move(out), [a](Tape& t, int self) {
    const Mat& g = t.grad(Var{self});
    const Mat& x = t.val(a);
    Mat& ga = t.grad_mut(a.id);
    for (size_t i = 0; i < g.size(); ++i) ga[i] += x[i] > 0.0 ? g[i] : 0.0;
  });
}

Var Tape::leaky_relu(Var a, double alpha) {
  Mat out = val(a);
  for (size_t i = 0; i < out.size(); ++i) out[i] = out[i] > 0.0 ? out[i] : alpha * out[i];
  return push(std::move(out), [a, alpha](Tape& t, int self) {
    const Mat& g = t.grad(Var{self});
    const Mat& x = t.val(a);
    Mat& ga = t.grad_mut(a.id);
    for (size_t i = 0; i < g.size(); ++i) ga[i] += x[i] > 0.0 ? g[i] : alpha * g[i];
  });
}

Var Tape::gelu(Var a) {
  const Mat& x = val(a);
  Mat out(x.rows(), x.cols());
  for (size_t i = 0; i < x.size(); ++i) out[i] = 0.5 * x[i] * (1.0 + std::erf(x[i] / kSqrt2));
  return push(std::move(out), [a](Tape& t, int self) {
    const Mat& g = t.grad(Var{self});
    const Mat& x = t.val(a);
    Mat& ga = t.grad_mut(a.id);
    for (size_t i = 0; i < g.size(); ++i) {
      const double cdf = 0.5 * (1.0 + std::erf(x[i] / kSqrt2));
      const double pdf = kInvSqrt2Pi * std::exp(-0.5 * x[i] * x[i]);
      ga[i] += g[i] * (cdf + x[i] * pdf);
    }
  });
}

Var Tape::tanh_act(Var a) {
  const Mat& x = val(a);
  Mat out(x.rows(), x.cols());
  for (size_t i = 0; i < x.size(); ++i) out[i] = std::tanh(x[i]);
  return push(std::move(out), [a](Tape& t, int self) {
    const Mat& g = t.grad(Var{self});
    const Mat& y = t.val(Var{self});
    Mat& ga = t.grad_mut(a.id);
    for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * (1.0 - y[i] * y[i]);
  });
}

Var Tape::exp_elem(Var a) {
  const Mat& x = val(a);
  Mat out(x.rows(), x.cols());
  for (size_t i = 0; i < x.size(); ++i) out[i] = std::exp(x[i]);
  return push(std::move(out), [a](Tape& t, int self) {
    const Mat& g = t.grad(Var{self});
    const Mat& y = t.val(Var{self});
    Mat& ga = t.grad_mut(a.id);
    for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * y[i];
  });
}

Var Tape::log_elem(Var a) {
  const Mat& x = val(a);
  Mat out(x.rows(), x.cols());
  for (size_t i = 0; i < x.size(); ++i) out[i] = std::log(x[i]);
  return push(std::move(out), [a](Tape& t, int self) {
    const Mat& g = t.grad(Var{self});
    const Mat& x = t.val(a);
    Mat& ga = t.grad_mut(a.id);
    for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i] / x[i];
  });
}

Var Tape::sum_rows(Var a) {
  const Mat& x = val(a);
  Mat out(x.rows(), 1);
  for (int i = 0; i < x.rows(); ++i) {
    double s = 0.0;
    for (int j = 0; j < x.cols(); ++j) s += x(i, j);
    out(i, 0) = s;
  }
  return push(std::move(out), [a](Tape& t, int self) {
    const Mat& g = t.grad(Var{self});
    Mat& ga = t.grad_mut(a.id);
    for (int i = 0; i < ga.rows(); ++i)
      for (int j = 0; j < ga.cols(); ++j) ga(i, j) += g(i, 0);
  });
}

Var Tape::sum_all(Var a) {
  Mat out(1, 1, iotzsl::sum_all(val(a)));
  return push(std::move(out), [a](Tape& t, int self) {
    const double g = t.grad(Var{self})(0, 0);
    Mat& ga = t.grad_mut(a.id);
    for (size_t i = 0; i < ga.size(); ++i) ga[i] += g;
  });
}

Var Tape::mean_all(Var a) {
  const double n = static_cast<double>(val(a).size());
  Mat out(1, 1, iotzsl::sum_all(val(a)) / n);
  return push(std::move(out), [a, n](Tape& t, int self) {
    const double g = t.grad(Var{self})(0, 0) / n;
    Mat& ga = t.grad_mut(a.id);
    for (size_t i = 0; i < ga.size(); ++i) ga[i] += g;
  });
}

Var Tape::unfold1d(Var a, int k, int stride) {
  const Mat& x = val(a);
  const int C = x.rows(), T = x.cols();
  IOTZSL_REQUIRE(k >= 1 && stride >= 1 && T >= k, ErrKind::validation, "unfold1d: bad window");
  const int n_out = (T - k) / stride + 1;
  Mat out(n_out, C * k);
  for (int p = 0; p < n_out; ++p)
    for (int c = 0; c < C; ++c)
      for (int j = 0; j < k; ++j) out(p, c * k + j) = x(c, p * stride + j);
  return push(std::move(out), [a, k, stride](Tape& t, int self) {
    const Mat& g = t.grad(Var{self});
    Mat& ga = t.grad_mut(a.id);
    const int C = ga.rows();
    for (int p = 0; p < g.rows(); ++p)
      for (int c = 0; c < C; ++c)
        for (int j = 0; j < k; ++j) ga(c, p * stride + j) += g(p, c * k + j);
  });
}

Var Tape::transpose(Var a) {
  Mat out = iotzsl::transpose(val(a));
  return push(std::move(out), [a](Tape& t, int self) {
    t.grad_mut(a.id) += iotzsl::transpose(t.grad(Var{self}));
  });
}

void Tape::backward(Var scalar_loss) {
  IOTZSL_REQUIRE(scalar_loss.valid() && scalar_loss.id < static_cast<int>(nodes_.size()),
                 ErrKind::validation, "backward: invalid loss var");
  const Mat& lv = nodes_[scalar_loss.id].val;
  IOTZSL_REQUIRE(lv.rows() == 1 && lv.cols() == 1, ErrKind::validation,
                 "backward: loss must be 1x1");
  for (auto& n : nodes_) {
    n.grad = Mat(n.val.rows(), n.val.cols(), 0.0);
  }
  nodes_[scalar_loss.id].grad(0, 0) = 1.0;
  for (int i = scalar_loss.id; i >= 0; --i) {
    if (nodes_[i].back) nodes_[i].back(*this, i);
  }
}

}  // namespace iotzsl::nn
