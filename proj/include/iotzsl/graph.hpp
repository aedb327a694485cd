#pragma once

#include <functional>
#include <vector>

#include "iotzsl/mat.hpp"

namespace iotzsl::nn {

struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

// Reverse-mode autodiff over Mat values. A Tape is built per evaluation (one
// training step, one encode call); ops append nodes and backward() walks the
// tape in reverse. Ops only ever reference earlier nodes, so creation order
// is a topological order.
class Tape {
 public:
  Var constant(Mat v);

  const Mat& val(Var v) const { return nodes_[v.id].val; }
  const Mat& grad(Var v) const { return nodes_[v.id].grad; }

  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  // a: [N x C], v: [1 x C] broadcast over rows.
  Var add_rowvec(Var a, Var v);
  // a: [N x C], v: [1 x C] broadcast elementwise product.
  Var mul_rowvec(Var a, Var v);
  Var scale(Var a, double s);
  Var mul(Var a, Var b);
  // Elementwise product with a non-differentiable mask/constant.
  Var mul_const(Var a, Mat mask);
  Var matmul(Var a, Var b);
  // a * b^T
  Var matmul_nt(Var a, Var b);
  // a^T * b
  Var matmul_tn(Var a, Var b);
  Var concat_rows(const std::vector<Var>& parts);
  Var concat_cols(const std::vector<Var>& parts);
  Var slice_rows(Var a, int r0, int r1);
  Var softmax_rows(Var a);
  Var layernorm_rows(Var a, double eps = 1e-5);
  Var l2normalize_rows(Var a, double eps = 1e-12);
  Var relu(Var a);
  Var leaky_relu(Var a, double alpha);
  Var gelu(Var a);
  Var tanh_act(Var a);
  Var exp_elem(Var a);
  Var log_elem(Var a);
  // [N x C] -> [N x 1]
  Var sum_rows(Var a);
  Var sum_all(Var a);
  Var mean_all(Var a);
  // Sliding-window unfold of a [C x T] series into [T_out x C*k] patches
  // (stride `stride`), the im2col step of temporal convolution.
  Var unfold1d(Var a, int k, int stride);
  Var transpose(Var a);

  // Seeds d(loss)/d(loss) = 1 and accumulates gradients for every node.
  void backward(Var scalar_loss);

  size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Mat val;
    Mat grad;
    std::function<void(Tape&, int self)> back;  // may be empty (leaf)
  };

  Var push(Mat val, std::function<void(Tape&, int)> back);
  Mat& grad_mut(int id) { return nodes_[id].grad; }

  std::vector<Node> nodes_;

  friend struct TapeAccess;
};

}  // namespace iotzsl::nn
