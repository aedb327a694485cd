#pragma once

#include <memory>
#include <string>
#include <vector>

#include "iotzsl/dataset.hpp"
#include "iotzsl/nn.hpp"

namespace iotzsl {

enum class IotArch { transformer, cnn, resnet };

const char* iot_arch_name(IotArch a);
IotArch iot_arch_from_name(const std::string& s);

struct IotEncoderConfig {
  IotArch architecture = IotArch::transformer;
  int channels = 0;   // input window shape
  int timesteps = 0;
  int patch_len = 8;  // temporal patch (transformer) / base kernel (conv nets)
  int width = 32;
  int depth = 2;
  int heads = 2;
  int feature_dim = 32;

  void validate() const;
};

// Feature extractor: one window in, one feature row out. The transformer
// variant patches the window along time, prepends a summary token and reads
// it out; the conv variants stack strided temporal convolutions.
class IotEncoder {
 public:
  IotEncoder() = default;
  IotEncoder(const IotEncoderConfig& cfg, Rng& rng);

  const IotEncoderConfig& config() const { return cfg_; }

  nn::Var features_var(nn::Tape& t, nn::ParamBag* bag, const Mat& window);
  // Inference mode: pure, bit-identical for identical windows.
  Mat features(const SensorWindow& w);

  void visit(const std::string& prefix, const nn::ParamVisitor& f);

 private:
  nn::Var transformer_fwd(nn::Tape& t, nn::ParamBag* bag, nn::Var win);
  nn::Var conv_fwd(nn::Tape& t, nn::ParamBag* bag, nn::Var win);

  IotEncoderConfig cfg_;
  // transformer pieces
  nn::Linear patch_embed_;
  Mat cls_token_;  // [1 x width]
  Mat pos_table_;  // [n_patches+1 x width]
  nn::TransformerStack stack_;
  // conv pieces (cnn / resnet)
  std::vector<nn::Linear> conv_;        // conv as unfold + linear
  std::vector<nn::Linear> skip_;        // 1x1 projections for residual paths
  // shared readout
  nn::Linear readout_;
};

// Embedding projector g: features to the shared semantic space, unit norm.
struct Projector {
  nn::Linear map;  // [feature_dim x d]

  Projector() = default;
  Projector(int feature_dim, int d, Rng& rng) : map(feature_dim, d, rng) {}
  static Projector identity_init(int d) {
    Projector p;
    p.map = nn::Linear::identity_init(d);
    return p;
  }

  nn::Var project_var(nn::Tape& t, nn::ParamBag* bag, nn::Var h) {
    return t.l2normalize_rows(map.apply(t, bag, h));
  }
  Mat project(const Mat& h);

  void visit(const std::string& prefix, const nn::ParamVisitor& f) { map.visit(prefix, f); }
};

// Plain linear softmax classifier with hand-rolled gradients; used for the
// specialist head and the frozen classifier that scores generated data.
struct LinearSoftmax {
  Mat W;                        // [in x n_classes]
  Mat b;                        // [1 x n_classes]
  std::vector<int> class_ids;   // logits column -> dataset class id
  bool trained = false;

  LinearSoftmax() = default;
  LinearSoftmax(int in_dim, std::vector<int> classes, Rng& rng);

  int index_of(int class_id) const;  // -1 when absent
  Mat logits(const Mat& x) const;    // [n x n_classes]
  Mat softmax(const Mat& x) const;
  // Mean cross-entropy over rows; labels are dataset class ids.
  double cross_entropy(const Mat& x, const std::vector<int>& labels, Mat* dlogits = nullptr) const;
  void train_step(const Mat& x, const std::vector<int>& labels, nn::SgdMomentum& opt);
  // Arg-max prediction; ties break toward the lowest class index.
  int predict(const Mat& x_row) const;
  double max_softmax(const Mat& x_row) const;

  void visit(const std::string& prefix, const nn::ParamVisitor& f) {
    f(prefix + ".W", W);
    f(prefix + ".b", b);
  }
};

// The edge specialist: the (frozen) feature extractor plus a linear softmax
// head over seen classes.
struct Specialist {
  LinearSoftmax head;

  int predict(IotEncoder& encoder, const SensorWindow& w) const;
  double max_softmax(IotEncoder& encoder, const SensorWindow& w) const;
};

// mu + g bundled: embeds windows into the semantic space.
struct IotBranch {
  IotEncoder encoder;
  Projector projector;

  nn::Var embed_var(nn::Tape& t, nn::ParamBag* bag, const Mat& window) {
    return projector.project_var(t, bag, encoder.features_var(t, bag, window));
  }
  Mat embed(const SensorWindow& w);
  // [n x d] embeddings for the given window indices, inference mode.
  Mat embed_all(const std::vector<SensorWindow>& windows, const std::vector<int>& indices);

  void visit(const nn::ParamVisitor& f) {
    encoder.visit("iot.encoder", f);
    projector.visit("iot.projector", f);
  }
};

}  // namespace iotzsl
