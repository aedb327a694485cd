#include "iotzsl/iot_branch.hpp"

#include <algorithm>
#include <cmath>

using namespace iotzsl::nn;

namespace iotzsl {

const char* iot_arch_name(IotArch a) {
  switch (a) {
    case IotArch::transformer: return "transformer";
    case IotArch::cnn: return "cnn";
    case IotArch::resnet: return "resnet";
  }
  return "transformer";
}

IotArch iot_arch_from_name(const std::string& s) {
  if (s == "transformer") return IotArch::transformer;
  if (s == "cnn") return IotArch::cnn;
  if (s == "resnet") return IotArch::resnet;
  throw Error(ErrKind::config, "unknown iot architecture: " + s);
}

void IotEncoderConfig::validate() const {
  IOTZSL_REQUIRE(channels >= 1 && timesteps >= 1, ErrKind::config,
                 "iot encoder needs positive channels/timesteps");
  IOTZSL_REQUIRE(width >= 1 && depth >= 1 && feature_dim >= 1, ErrKind::config,
                 "iot encoder needs positive width/depth/feature_dim");
  if (architecture == IotArch::transformer) {
    IOTZSL_REQUIRE(patch_len >= 1 && timesteps % patch_len == 0, ErrKind::config,
                   "transformer patch_len must divide the window length (" +
                       std::to_string(timesteps) + " % " + std::to_string(patch_len) + " != 0)");
    IOTZSL_REQUIRE(width % heads == 0, ErrKind::config, "width must be divisible by heads");
  }
}

IotEncoder::IotEncoder(const IotEncoderConfig& cfg, Rng& rng) : cfg_(cfg) {
  cfg_.validate();
  if (cfg_.architecture == IotArch::transformer) {
    const int n_patches = cfg_.timesteps / cfg_.patch_len;
    patch_embed_ = Linear(cfg_.channels * cfg_.patch_len, cfg_.width, rng);
    cls_token_ = randn(rng, 1, cfg_.width, 0.02);
    pos_table_ = randn(rng, n_patches + 1, cfg_.width, 0.02);
    stack_ = TransformerStack(cfg_.width, cfg_.depth, cfg_.heads, rng);
  } else {
    // conv tower: kernel 5 stride 2 at the stem, then kernel-3 layers;
    // resnet adds 1x1-projected skips around stride-1 pairs.
    int t_len = cfg_.timesteps;
    int in_ch = cfg_.channels;
    const int k_stem = std::min(5, t_len);
    conv_.emplace_back(in_ch * k_stem, cfg_.width, rng);
    t_len = (t_len - k_stem) / 2 + 1;
    for (int l = 1; l < cfg_.depth; ++l) {
      const int k = std::min(3, t_len);
      conv_.emplace_back(cfg_.width * k, cfg_.width, rng);
      if (cfg_.architecture == IotArch::resnet)
        skip_.emplace_back(cfg_.width, cfg_.width, rng);
      t_len = t_len - k + 1;
      IOTZSL_REQUIRE(t_len >= 1, ErrKind::config,
                     "conv tower consumed the whole window; reduce depth");
    }
  }
  readout_ = Linear(cfg_.width, cfg_.feature_dim, rng);
}

Var IotEncoder::transformer_fwd(Tape& t, ParamBag* bag, Var win) {
  Var patches = t.unfold1d(win, cfg_.patch_len, cfg_.patch_len);  // [n_p x C*patch]
  Var tokens = patch_embed_.apply(t, bag, patches);               // [n_p x width]
  Var cls = bag ? bag->use(t, cls_token_) : t.constant(cls_token_);
  Var seq = t.concat_rows({cls, tokens});
  Var pos = bag ? bag->use(t, pos_table_) : t.constant(pos_table_);
  seq = t.add(seq, pos);
  seq = stack_.apply(t, bag, seq);
  Var summary = t.slice_rows(seq, 0, 1);
  return readout_.apply(t, bag, summary);
}

Var IotEncoder::conv_fwd(Tape& t, ParamBag* bag, Var win) {
  // stem: kernel 5, stride 2
  const int k_stem = std::min(5, cfg_.timesteps);
  Var x = t.relu(conv_[0].apply(t, bag, t.unfold1d(win, k_stem, 2)));  // [T1 x width]
  size_t skip_idx = 0;
  for (size_t l = 1; l < conv_.size(); ++l) {
    const int t_len = t.val(x).rows();
    const int k = std::min(3, t_len);
    Var u = t.unfold1d(t.transpose(x), k, 1);  // [T' x width*k]
    Var z = conv_[l].apply(t, bag, u);
    if (cfg_.architecture == IotArch::resnet && skip_idx < skip_.size()) {
      // align the skip path with the k-1 timesteps lost to the valid conv
      Var aligned = t.slice_rows(x, (k - 1) / 2, t_len - k / 2);
      z = t.add(z, skip_[skip_idx].apply(t, bag, aligned));
      ++skip_idx;
    }
    x = t.relu(z);
  }
  const int t_out = t.val(x).rows();
  Mat pool(1, t_out, 1.0 / t_out);
  Var pooled = t.matmul(t.constant(pool), x);
  return readout_.apply(t, bag, pooled);
}

Var IotEncoder::features_var(Tape& t, ParamBag* bag, const Mat& window) {
  IOTZSL_REQUIRE(window.rows() == cfg_.channels && window.cols() == cfg_.timesteps,
                 ErrKind::validation,
                 "window shape " + window.shape_str() + " does not match encoder input [" +
                     std::to_string(cfg_.channels) + "x" + std::to_string(cfg_.timesteps) + "]");
  Var win = t.constant(window);
  return cfg_.architecture == IotArch::transformer ? transformer_fwd(t, bag, win)
                                                   : conv_fwd(t, bag, win);
}

Mat IotEncoder::features(const SensorWindow& w) {
  Tape t;
  return t.val(features_var(t, nullptr, w.data));
}

void IotEncoder::visit(const std::string& prefix, const ParamVisitor& f) {
  if (cfg_.architecture == IotArch::transformer) {
    patch_embed_.visit(prefix + ".patch_embed", f);
    f(prefix + ".cls_token", cls_token_);
    f(prefix + ".pos_table", pos_table_);
    stack_.visit(prefix + ".stack", f);
  } else {
    for (size_t i = 0; i < conv_.size(); ++i)
      conv_[i].visit(prefix + ".conv" + std::to_string(i), f);
    for (size_t i = 0; i < skip_.size(); ++i)
      skip_[i].visit(prefix + ".skip" + std::to_string(i), f);
  }
  readout_.visit(prefix + ".readout", f);
}

Mat Projector::project(const Mat& h) {
  Tape t;
  return t.val(project_var(t, nullptr, t.constant(h)));
}

LinearSoftmax::LinearSoftmax(int in_dim, std::vector<int> classes, Rng& rng)
    : W(randn(rng, in_dim, static_cast<int>(classes.size()), 0.02)),
      b(1, static_cast<int>(classes.size()), 0.0),
      class_ids(std::move(classes)) {}

int LinearSoftmax::index_of(int class_id) const {
  for (size_t i = 0; i < class_ids.size(); ++i)
    if (class_ids[i] == class_id) return static_cast<int>(i);
  return -1;
}

Mat LinearSoftmax::logits(const Mat& x) const {
  Mat out = matmul(x, W);
  for (int i = 0; i < out.rows(); ++i)
    for (int j = 0; j < out.cols(); ++j) out(i, j) += b(0, j);
  return out;
}

Mat LinearSoftmax::softmax(const Mat& x) const {
  Mat z = logits(x);
  for (int i = 0; i < z.rows(); ++i) {
    double mx = z(i, 0);
    for (int j = 1; j < z.cols(); ++j) mx = std::max(mx, z(i, j));
    double s = 0.0;
    for (int j = 0; j < z.cols(); ++j) {
      z(i, j) = std::exp(z(i, j) - mx);
      s += z(i, j);
    }
    for (int j = 0; j < z.cols(); ++j) z(i, j) /= s;
  }
  return z;
}

double LinearSoftmax::cross_entropy(const Mat& x, const std::vector<int>& labels,
                                    Mat* dlogits) const {
  IOTZSL_REQUIRE(x.rows() == static_cast<int>(labels.size()), ErrKind::validation,
                 "cross_entropy: batch size mismatch");
  Mat p = softmax(x);
  double loss = 0.0;
  if (dlogits) *dlogits = p;
  for (int i = 0; i < x.rows(); ++i) {
    const int j = index_of(labels[static_cast<size_t>(i)]);
    IOTZSL_REQUIRE(j >= 0, ErrKind::validation,
                   "label " + std::to_string(labels[static_cast<size_t>(i)]) +
                       " outside the classifier's class set");
    loss += -std::log(std::max(p(i, j), 1e-300));
    if (dlogits) (*dlogits)(i, j) -= 1.0;
  }
  if (dlogits) *dlogits *= 1.0 / x.rows();
  return loss / x.rows();
}

void LinearSoftmax::train_step(const Mat& x, const std::vector<int>& labels, SgdMomentum& opt) {
  Mat dlogits;
  cross_entropy(x, labels, &dlogits);
  Mat dW = matmul_tn(x, dlogits);
  Mat db(1, dlogits.cols(), 0.0);
  for (int i = 0; i < dlogits.rows(); ++i)
    for (int j = 0; j < dlogits.cols(); ++j) db(0, j) += dlogits(i, j);
  opt.apply(W, dW);
  opt.apply(b, db);
  trained = true;
}

int LinearSoftmax::predict(const Mat& x_row) const {
  IOTZSL_REQUIRE(trained, ErrKind::state, "classifier used before training");
  Mat z = logits(x_row);
  int best = 0;
  for (int j = 1; j < z.cols(); ++j)
    if (z(0, j) > z(0, best)) best = j;  // strict: ties keep the lowest index
  return class_ids[static_cast<size_t>(best)];
}

double LinearSoftmax::max_softmax(const Mat& x_row) const {
  IOTZSL_REQUIRE(trained, ErrKind::state, "classifier used before training");
  Mat p = softmax(x_row);
  double mx = 0.0;
  for (int j = 0; j < p.cols(); ++j) mx = std::max(mx, p(0, j));
  return mx;
}

int Specialist::predict(IotEncoder& encoder, const SensorWindow& w) const {
  return head.predict(encoder.features(w));
}

double Specialist::max_softmax(IotEncoder& encoder, const SensorWindow& w) const {
  return head.max_softmax(encoder.features(w));
}

Mat IotBranch::embed(const SensorWindow& w) {
  Tape t;
  return t.val(embed_var(t, nullptr, w.data));
}

Mat IotBranch::embed_all(const std::vector<SensorWindow>& windows,
                         const std::vector<int>& indices) {
  IOTZSL_REQUIRE(!indices.empty(), ErrKind::validation, "embed_all: no indices");
  Mat out;
  for (size_t i = 0; i < indices.size(); ++i) {
    const Mat e = embed(windows[static_cast<size_t>(indices[i])]);
    if (out.empty()) out = Mat(static_cast<int>(indices.size()), e.cols());
    for (int j = 0; j < e.cols(); ++j) out(static_cast<int>(i), j) = e(0, j);
  }
  return out;
}

}  // namespace iotzsl
