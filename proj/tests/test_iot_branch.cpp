#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "iotzsl/iot_branch.hpp"
#include "support/gradcheck.hpp"

using namespace iotzsl;
using namespace iotzsl::nn;
using testsupport::allclose;
using testsupport::numeric_grad;

namespace {

SensorWindow make_window(Rng& rng, int channels, int timesteps) {
  SensorWindow w;
  w.data = randn(rng, channels, timesteps);
  w.label = 0;
  return w;
}

IotEncoderConfig base_config(IotArch arch) {
  IotEncoderConfig cfg;
  cfg.architecture = arch;
  cfg.channels = 6;
  cfg.timesteps = 32;
  cfg.patch_len = 8;
  cfg.width = 16;
  cfg.depth = 2;
  cfg.heads = 2;
  cfg.feature_dim = 12;
  return cfg;
}

}  // namespace

TEST_CASE("every architecture produces the configured feature dim, deterministically") {
  for (IotArch arch : {IotArch::transformer, IotArch::cnn, IotArch::resnet}) {
    CAPTURE(iot_arch_name(arch));
    Rng rng(7);
    IotEncoder enc(base_config(arch), rng);
    Rng wrng(9);
    SensorWindow w = make_window(wrng, 6, 32);
    Mat h1 = enc.features(w);
    Mat h2 = enc.features(w);
    CHECK(h1.rows() == 1);
    CHECK(h1.cols() == 12);
    CHECK(allclose(h1, h2, 0, 0));  // inference purity, bit-identical
  }
}

TEST_CASE("shape mismatch is a validation error naming expected vs actual") {
  Rng rng(7);
  IotEncoder enc(base_config(IotArch::transformer), rng);
  Rng wrng(9);
  SensorWindow bad = make_window(wrng, 6, 30);
  CHECK_THROWS_WITH_AS(enc.features(bad), doctest::Contains("[6x32]"), Error);
}

TEST_CASE("encoder gradients match finite differences") {
  Rng rng(21);
  IotEncoderConfig cfg = base_config(IotArch::transformer);
  cfg.timesteps = 16;
  cfg.patch_len = 4;
  cfg.depth = 1;
  IotEncoder enc(cfg, rng);
  Rng wrng(5);
  Mat window = randn(wrng, 6, 16);
  Mat probe = randn(wrng, 1, cfg.feature_dim);

  Tape t;
  ParamBag bag;
  Var h = enc.features_var(t, &bag, window);
  Var s = t.sum_all(t.mul_const(h, probe));
  t.backward(s);

  Mat* target = nullptr;
  enc.visit("enc", [&](const std::string& name, Mat& m) {
    if (name == "enc.patch_embed.W") target = &m;
  });
  REQUIRE(target != nullptr);
  Mat analytic;
  bag.for_each_grad(t, [&](Mat& p, const Mat& g) {
    if (&p == target) analytic = g;
  });
  REQUIRE(!analytic.empty());

  Mat numeric = numeric_grad(*target, [&](const Mat& w) {
    Mat saved = *target;
    *target = w;
    Tape tt;
    Var hh = enc.features_var(tt, nullptr, window);
    Var ss = tt.sum_all(tt.mul_const(hh, probe));
    *target = saved;
    return tt.val(ss)(0, 0);
  }, 1e-5);
  CHECK(allclose(analytic, numeric, 1e-4, 1e-6));
}

TEST_CASE("cnn and resnet gradients flow") {
  for (IotArch arch : {IotArch::cnn, IotArch::resnet}) {
    CAPTURE(iot_arch_name(arch));
    Rng rng(33);
    IotEncoder enc(base_config(arch), rng);
    Rng wrng(3);
    Mat window = randn(wrng, 6, 32);
    Tape t;
    ParamBag bag;
    Var h = enc.features_var(t, &bag, window);
    Var s = t.mean_all(h);
    t.backward(s);
    int nonzero_grads = 0;
    bag.for_each_grad(t, [&](Mat&, const Mat& g) {
      for (size_t i = 0; i < g.size(); ++i)
        if (g[i] != 0.0) { ++nonzero_grads; break; }
    });
    CHECK(nonzero_grads >= 3);
  }
}

TEST_CASE("projector normalizes and supports identity init") {
  Rng rng(11);
  Projector p = Projector::identity_init(8);
  Mat h = randn(rng, 1, 8);
  l2_normalize_rows(h);
  Mat e = p.project(h);
  CHECK(allclose(e, h, 1e-12, 0));  // identity map on a pre-normalized vector

  Projector q(8, 6, rng);
  Mat e2 = q.project(randn(rng, 1, 8));
  CHECK(e2.cols() == 6);
  CHECK(std::fabs(row_norm(e2, 0) - 1.0) < 1e-6);
}

TEST_CASE("linear softmax head: training, prediction, tie-breaking") {
  Rng rng(17);
  LinearSoftmax head(4, {0, 1, 4}, rng);

  // untrained use is a state error
  Mat x(1, 4, 0.1);
  CHECK_THROWS_AS(head.predict(x), Error);

  // linearly separable three-way problem
  Mat train(30, 4, 0.0);
  std::vector<int> labels(30);
  Rng drng(5);
  for (int i = 0; i < 30; ++i) {
    const int c = i % 3;
    for (int j = 0; j < 4; ++j) train(i, j) = 0.05 * drng.gaussian();
    train(i, c) += 2.0;
    labels[static_cast<size_t>(i)] = std::vector<int>{0, 1, 4}[static_cast<size_t>(c)];
  }
  SgdMomentum opt(0.5, 0.9);
  for (int epoch = 0; epoch < 200; ++epoch) head.train_step(train, labels, opt);

  int correct = 0;
  for (int i = 0; i < 30; ++i) {
    Mat row(1, 4);
    for (int j = 0; j < 4; ++j) row(0, j) = train(i, j);
    if (head.predict(row) == labels[static_cast<size_t>(i)]) ++correct;
  }
  CHECK(correct == 30);  // converged on a separable set

  // one-hot logits pick the hot class; exact ties break to the lowest class id
  LinearSoftmax tie(2, {1, 4}, rng);
  tie.W = Mat(2, 2, 0.0);
  tie.b = Mat(1, 2, 0.0);
  tie.trained = true;
  Mat anything(1, 2, 0.3);
  CHECK(tie.predict(anything) == 1);

  // label outside the class set
  CHECK_THROWS_AS(head.cross_entropy(train, std::vector<int>(30, 9)), Error);
}

TEST_CASE("embedding dimension must match the prototype dimension downstream") {
  Rng rng(3);
  IotBranch branch;
  branch.encoder = IotEncoder(base_config(IotArch::transformer), rng);
  branch.projector = Projector(12, 10, rng);
  Rng wrng(2);
  SensorWindow w = make_window(wrng, 6, 32);
  Mat e = branch.embed(w);
  CHECK(e.cols() == 10);
  CHECK(std::fabs(row_norm(e, 0) - 1.0) < 1e-6);
}
