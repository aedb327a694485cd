#pragma once

#include <functional>
#include <string>
#include <unordered_map>
#include <vector>

#include "iotzsl/graph.hpp"
#include "iotzsl/rng.hpp"

namespace iotzsl::nn {

// Binds parameter Mats to tape leaves for one evaluation. A Mat used twice
// (e.g. soft prompt vectors shared by every class) maps to a single leaf, so
// fan-out gradients accumulate naturally.
class ParamBag {
 public:
  Var use(Tape& t, Mat& m) {
    for (const auto& [ptr, var] : entries_)
      if (ptr == &m) return var;
    Var v = t.constant(m);
    entries_.emplace_back(&m, v);
    return v;
  }

  // Visits (param, grad) pairs in first-use order; call after backward().
  void for_each_grad(Tape& t, const std::function<void(Mat&, const Mat&)>& f) {
    for (auto& [ptr, var] : entries_) f(*ptr, t.grad(var));
  }

  size_t size() const { return entries_.size(); }

 private:
  std::vector<std::pair<Mat*, Var>> entries_;
};

using ParamVisitor = std::function<void(const std::string&, Mat&)>;

// SGD with momentum, buf = m*buf + g; p -= lr*buf.
class SgdMomentum {
 public:
  SgdMomentum(double lr, double momentum) : lr_(lr), momentum_(momentum) {}

  void apply(Mat& param, const Mat& grad) {
    Mat& buf = velocity_[&param];
    if (buf.empty()) buf = Mat(grad.rows(), grad.cols(), 0.0);
    for (size_t i = 0; i < buf.size(); ++i) {
      buf[i] = momentum_ * buf[i] + grad[i];
      param[i] -= lr_ * buf[i];
    }
  }

  void step(ParamBag& bag, Tape& t) {
    bag.for_each_grad(t, [this](Mat& p, const Mat& g) { apply(p, g); });
  }

  double lr() const { return lr_; }
  void set_lr(double lr) { lr_ = lr; }

 private:
  double lr_;
  double momentum_;
  std::unordered_map<Mat*, Mat> velocity_;
};

struct Linear {
  Mat W;  // [in x out]
  Mat b;  // [1 x out]

  Linear() = default;
  Linear(int in, int out, Rng& rng) {
    const double s = std::sqrt(2.0 / (in + out));
    W = randn(rng, in, out, s);
    b = Mat(1, out, 0.0);
  }

  static Linear identity_init(int dim) {
    Linear l;
    l.W = Mat::identity(dim);
    l.b = Mat(1, dim, 0.0);
    return l;
  }

  int in_dim() const { return W.rows(); }
  int out_dim() const { return W.cols(); }

  // bag == nullptr runs the layer frozen (weights as constants).
  Var apply(Tape& t, ParamBag* bag, Var x) {
    Var w = bag ? bag->use(t, W) : t.constant(W);
    Var bb = bag ? bag->use(t, b) : t.constant(b);
    return t.add_rowvec(t.matmul(x, w), bb);
  }

  void visit(const std::string& prefix, const ParamVisitor& f) {
    f(prefix + ".W", W);
    f(prefix + ".b", b);
  }
};

// LayerNorm with learnable affine.
struct LayerNorm {
  Mat gain;  // [1 x d]
  Mat bias;  // [1 x d]
  double eps = 1e-5;

  LayerNorm() = default;
  explicit LayerNorm(int d) : gain(1, d, 1.0), bias(1, d, 0.0) {}

  Var apply(Tape& t, ParamBag* bag, Var x) {
    Var g = bag ? bag->use(t, gain) : t.constant(gain);
    Var bb = bag ? bag->use(t, bias) : t.constant(bias);
    return t.add_rowvec(t.mul_rowvec(t.layernorm_rows(x, eps), g), bb);
  }

  void visit(const std::string& prefix, const ParamVisitor& f) {
    f(prefix + ".gain", gain);
    f(prefix + ".bias", bias);
  }
};

// Pre-norm transformer block: x + attn(ln1(x)); x + mlp(ln2(x)).
// Heads keep separate projection matrices; outputs are concatenated and
// mixed by the output projection.
struct TransformerBlock {
  int width = 0;
  int heads = 1;
  std::vector<Linear> wq, wk, wv;  // per head [width x head_dim]
  Linear wo;                       // [width x width]
  Linear mlp_in, mlp_out;
  LayerNorm ln1, ln2;

  TransformerBlock() = default;
  TransformerBlock(int width_, int heads_, Rng& rng);

  Var apply(Tape& t, ParamBag* bag, Var x);

  void visit(const std::string& prefix, const ParamVisitor& f);
};

// Stack of blocks with a final layernorm.
struct TransformerStack {
  std::vector<TransformerBlock> blocks;
  LayerNorm ln_final;

  TransformerStack() = default;
  TransformerStack(int width, int depth, int heads, Rng& rng) {
    for (int i = 0; i < depth; ++i) blocks.emplace_back(width, heads, rng);
    ln_final = LayerNorm(width);
  }

  Var apply(Tape& t, ParamBag* bag, Var x) {
    for (auto& blk : blocks) x = blk.apply(t, bag, x);
    return ln_final.apply(t, bag, x);
  }

  void visit(const std::string& prefix, const ParamVisitor& f) {
    for (size_t i = 0; i < blocks.size(); ++i)
      blocks[i].visit(prefix + ".blk" + std::to_string(i), f);
    ln_final.visit(prefix + ".ln_final", f);
  }
};

}  // namespace iotzsl::nn
