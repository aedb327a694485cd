#include "iotzsl/nn.hpp"

#include <cmath>

namespace iotzsl::nn {

TransformerBlock::TransformerBlock(int width_, int heads_, Rng& rng)
    : width(width_), heads(heads_) {
  IOTZSL_REQUIRE(width_ % heads_ == 0, ErrKind::config,
                 "transformer width must be divisible by head count");
  const int head_dim = width_ / heads_;
  for (int h = 0; h < heads_; ++h) {
    wq.emplace_back(width_, head_dim, rng);
    wk.emplace_back(width_, head_dim, rng);
    wv.emplace_back(width_, head_dim, rng);
  }
  wo = Linear(width_, width_, rng);
  mlp_in = Linear(width_, 4 * width_, rng);
  mlp_out = Linear(4 * width_, width_, rng);
  ln1 = LayerNorm(width_);
  ln2 = LayerNorm(width_);
}

Var TransformerBlock::apply(Tape& t, ParamBag* bag, Var x) {
  const int head_dim = width / heads;
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(head_dim));

  Var xn = ln1.apply(t, bag, x);
  std::vector<Var> head_outs;
  head_outs.reserve(heads);
  for (int h = 0; h < heads; ++h) {
    Var q = wq[h].apply(t, bag, xn);
    Var k = wk[h].apply(t, bag, xn);
    Var v = wv[h].apply(t, bag, xn);
    Var att = t.softmax_rows(t.scale(t.matmul_nt(q, k), inv_sqrt_d));
    head_outs.push_back(t.matmul(att, v));
  }
  Var merged = heads == 1 ? head_outs[0] : t.concat_cols(head_outs);
  x = t.add(x, wo.apply(t, bag, merged));

  Var yn = ln2.apply(t, bag, x);
  Var hidden = t.gelu(mlp_in.apply(t, bag, yn));
  return t.add(x, mlp_out.apply(t, bag, hidden));
}

void TransformerBlock::visit(const std::string& prefix, const ParamVisitor& f) {
  for (int h = 0; h < heads; ++h) {
    wq[h].visit(prefix + ".h" + std::to_string(h) + ".wq", f);
    wk[h].visit(prefix + ".h" + std::to_string(h) + ".wk", f);
    wv[h].visit(prefix + ".h" + std::to_string(h) + ".wv", f);
  }
  wo.visit(prefix + ".wo", f);
  mlp_in.visit(prefix + ".mlp_in", f);
  mlp_out.visit(prefix + ".mlp_out", f);
  ln1.visit(prefix + ".ln1", f);
  ln2.visit(prefix + ".ln2", f);
}

}  // namespace iotzsl::nn
