#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "iotzsl/contrastive.hpp"
#include "iotzsl/gan.hpp"
#include "support/eq1_oracle.hpp"
#include "support/gradcheck.hpp"

using namespace iotzsl;
using namespace iotzsl::nn;
using testsupport::allclose;
using testsupport::numeric_grad;
using testsupport::supcon_loss_from_sims;
using testsupport::supcon_loss_oracle;
namespace fs = std::filesystem;

namespace {

Mat unit_rows(Rng& rng, int n, int d) {
  Mat m = randn(rng, n, d);
  l2_normalize_rows(m);
  return m;
}

std::vector<int> random_labels(Rng& rng, int n, int n_classes) {
  std::vector<int> labels(static_cast<size_t>(n));
  // ensure at least two distinct classes
  labels[0] = 0;
  labels[1] = 1 % n_classes;
  for (int i = 2; i < n; ++i) labels[static_cast<size_t>(i)] = rng.uniform_int(n_classes);
  return labels;
}

}  // namespace

TEST_CASE("loss equals the literal summation oracle on random batches") {
  Rng rng(101);
  for (int trial = 0; trial < 100; ++trial) {
    const int d = 2 + rng.uniform_int(7);        // <= 8
    const int n_b = 2 + rng.uniform_int(7);      // <= 8
    const int n_t = 2 + rng.uniform_int(3);
    const double tau = rng.uniform(0.1, 1.5);
    Mat e = unit_rows(rng, n_b, d);
    Mat t = unit_rows(rng, n_t, d);
    auto labels = random_labels(rng, n_b, n_t);
    const double lib = supervised_contrastive_loss(e, labels, t, tau);
    const double oracle = supcon_loss_oracle(e, labels, t, tau);
    CHECK(lib == doctest::Approx(oracle).epsilon(1e-9));
    CHECK(std::fabs(lib - oracle) < 1e-6);
  }
}

TEST_CASE("hand-evaluated batch: aligned pair plus orthogonal class") {
  // tau=1, e1=e2=t_A=u, t_B orthogonal to u, e3=t_B
  Mat e(3, 2, 0.0);
  e(0, 0) = 1.0; e(1, 0) = 1.0; e(2, 1) = 1.0;
  Mat t(2, 2, 0.0);
  t(0, 0) = 1.0; t(1, 1) = 1.0;
  std::vector<int> labels = {0, 0, 1};

  // L1 = L2 = -1 + log(e + 3); L3 = -1 + log(4)
  const double expected = 2.0 * (-1.0 + std::log(std::exp(1.0) + 3.0)) +
                          (-1.0 + std::log(4.0));
  const double lib = supervised_contrastive_loss(e, labels, t, 1.0);
  CHECK(lib == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("validation: single-class batch and bad inputs rejected") {
  Rng rng(7);
  Mat e = unit_rows(rng, 2, 4);
  Mat t = unit_rows(rng, 1, 4);
  // two samples of one class with only that class's prototype
  CHECK_THROWS_AS(supervised_contrastive_loss(e, {0, 0}, t, 0.2), Error);

  Mat t2 = unit_rows(rng, 2, 4);
  // non-normalized embeddings
  Mat bad = e;
  bad(0, 0) *= 2.0;
  CHECK_THROWS_AS(supervised_contrastive_loss(bad, {0, 1}, t2, 0.2), Error);
  // label without a prototype row
  CHECK_THROWS_AS(supervised_contrastive_loss(e, {0, 5}, t2, 0.2), Error);
  // non-positive temperature
  CHECK_THROWS_AS(supervised_contrastive_loss(e, {0, 1}, t2, 0.0), Error);
}

TEST_CASE("permuting batch order leaves the loss unchanged") {
  Rng rng(19);
  const int n_b = 6, d = 5, n_t = 3;
  Mat e = unit_rows(rng, n_b, d);
  Mat t = unit_rows(rng, n_t, d);
  auto labels = random_labels(rng, n_b, n_t);
  const double base = supervised_contrastive_loss(e, labels, t, 0.2);

  std::vector<int> perm = {3, 0, 5, 1, 4, 2};
  Mat e2(n_b, d);
  std::vector<int> labels2(n_b);
  for (int i = 0; i < n_b; ++i) {
    for (int j = 0; j < d; ++j) e2(i, j) = e(perm[static_cast<size_t>(i)], j);
    labels2[static_cast<size_t>(i)] = labels[static_cast<size_t>(perm[static_cast<size_t>(i)])];
  }
  const double permuted = supervised_contrastive_loss(e2, labels2, t, 0.2);
  CHECK(permuted == doctest::Approx(base).epsilon(1e-6));
}

TEST_CASE("analytic gradients match finite differences") {
  Rng rng(23);
  for (int trial = 0; trial < 20; ++trial) {
    const int d = 3 + rng.uniform_int(6);    // <= 8
    const int n_b = 3 + rng.uniform_int(4);  // <= 6
    const int n_t = 2 + rng.uniform_int(2);
    const double tau = rng.uniform(0.15, 1.0);
    Mat e = unit_rows(rng, n_b, d);
    Mat t = unit_rows(rng, n_t, d);
    auto labels = random_labels(rng, n_b, n_t);

    Mat ge, gt;
    supervised_contrastive_loss(e, labels, t, tau, &ge, &gt);

    // oracle treats the loss as a free function of the raw entries
    Mat ge_num = numeric_grad(e, [&](const Mat& ee) { return supcon_loss_oracle(ee, labels, t, tau); });
    Mat gt_num = numeric_grad(t, [&](const Mat& tt) { return supcon_loss_oracle(e, labels, tt, tau); });
    CHECK(testsupport::max_rel_err(ge, ge_num) < 1e-4);
    CHECK(testsupport::max_rel_err(gt, gt_num) < 1e-4);
  }
}

TEST_CASE("similarity directions: prototype positives always help, negatives always hurt") {
  // Sample-sample positives sit in both the alignment term and the
  // log-partition, so their direction is only guaranteed while the pair's
  // softmax share stays below the 1/(|P(i)|+1) averaging weight. The
  // own-prototype similarity never enters the partition, so its direction is
  // unconditional, as is the sign for negatives.
  Rng rng(31);
  const int n_b = 5, n_t = 3;
  std::vector<int> labels = {0, 0, 1, 2, 1};
  const double h = 1e-6;

  for (int trial = 0; trial < 25; ++trial) {
    Mat s_ee = randn(rng, n_b, n_b);
    Mat s_et = randn(rng, n_b, n_t);
    Mat s_tt = randn(rng, n_t, n_t);

    auto d_loss_d_set = [&](int i, int n) {
      Mat up = s_et, dn = s_et;
      up(i, n) += h;
      dn(i, n) -= h;
      return (supcon_loss_from_sims(s_ee, up, s_tt, labels) -
              supcon_loss_from_sims(s_ee, dn, s_tt, labels)) / (2 * h);
    };
    CHECK(d_loss_d_set(0, 0) < 0.0);  // own prototype: strict decrease, any state
    CHECK(d_loss_d_set(0, 1) > 0.0);  // other prototype: strict increase, any state

    auto d_loss_d_see = [&](int i, int p) {
      Mat up = s_ee, dn = s_ee;
      up(i, p) += h;
      dn(i, p) -= h;
      return (supcon_loss_from_sims(up, s_et, s_tt, labels) -
              supcon_loss_from_sims(dn, s_et, s_tt, labels)) / (2 * h);
    };
    CHECK(d_loss_d_see(0, 2) > 0.0);  // sample negative: strict increase, any state
  }

  // mild-similarity regime: the sample positive's softmax share is far below
  // 1/2, so raising it must lower the loss
  Mat s_ee(n_b, n_b, 0.0), s_et(n_b, n_t, 0.0), s_tt(n_t, n_t, 0.0);
  auto d_pos = [&](int i, int p) {
    Mat up = s_ee, dn = s_ee;
    up(i, p) += h;
    dn(i, p) -= h;
    return (supcon_loss_from_sims(up, s_et, s_tt, labels) -
            supcon_loss_from_sims(dn, s_et, s_tt, labels)) / (2 * h);
  };
  CHECK(d_pos(0, 1) < 0.0);
}

TEST_CASE("batch sampler guarantees >= 2 distinct classes") {
  Rng rng(41);
  std::vector<int> pool, labels;
  for (int c = 0; c < 4; ++c)
    for (int i = 0; i < 20; ++i) {
      pool.push_back(c * 100 + i);
      labels.push_back(c);
    }
  for (int trial = 0; trial < 30; ++trial) {
    auto batch = sample_contrastive_batch(pool, labels, 8, rng);
    CHECK(batch.size() == 8);
    std::set<int> classes;
    for (int idx : batch) classes.insert(idx / 100);
    CHECK(classes.size() >= 2);
  }
}

namespace {

struct TinySetup {
  std::shared_ptr<ToyTextEncoder> encoder;
  TextBranch text;
  IotBranch iot;
  std::vector<SensorWindow> windows;
  std::vector<int> train_idx;
};

// Two well-separated synthetic classes over 4x16 windows.
TinySetup tiny_setup(uint64_t seed, int per_class = 10) {
  TinySetup s;
  ToyTextEncoder::Config cfg;
  cfg.width = 12;
  cfg.embed_dim = 12;
  cfg.depth = 1;
  cfg.heads = 2;
  cfg.context_limit = 16;
  cfg.vocab_size = 64;
  cfg.seed = 5;
  s.encoder = std::make_shared<ToyTextEncoder>(cfg);

  HardPromptSet prompts;
  prompts.descriptions["up"] = "signal with strong positive level";
  prompts.descriptions["down"] = "signal with strong negative level";
  Rng rng(seed);
  s.text = TextBranch::create(s.encoder, {"up", "down"}, prompts, 4, rng);

  IotEncoderConfig icfg;
  icfg.architecture = IotArch::transformer;
  icfg.channels = 4;
  icfg.timesteps = 16;
  icfg.patch_len = 4;
  icfg.width = 12;
  icfg.depth = 1;
  icfg.heads = 2;
  icfg.feature_dim = 12;
  s.iot.encoder = IotEncoder(icfg, rng);
  s.iot.projector = Projector(12, s.encoder->embed_dim(), rng);

  Rng drng(seed ^ 99);
  for (int c = 0; c < 2; ++c)
    for (int i = 0; i < per_class; ++i) {
      SensorWindow w;
      w.data = Mat(4, 16);
      for (size_t k = 0; k < w.data.size(); ++k)
        w.data[k] = (c == 0 ? 1.0 : -1.0) + 0.1 * drng.gaussian();
      w.label = c;
      s.windows.push_back(std::move(w));
      s.train_idx.push_back(c * per_class + i);
    }
  return s;
}

std::vector<Mat> snapshot_params(TinySetup& s) {
  std::vector<Mat> out;
  auto grab = [&out](const std::string&, Mat& m) { out.push_back(m); };
  s.iot.visit(grab);
  s.text.visit(grab);
  return out;
}

}  // namespace

TEST_CASE("training on a separable two-class set contracts the loss") {
  TinySetup s = tiny_setup(7);
  TrainConfig cfg;
  cfg.batch_size = 8;
  cfg.epochs = 25;
  cfg.learning_rate = 0.02;
  cfg.seed = 3;
  auto curve = train_contrastive(s.iot, s.text, s.windows, s.train_idx, cfg);
  REQUIRE(curve.size() == 25);
  CHECK(curve.back().mean_loss < curve.front().mean_loss);
}

TEST_CASE("zero learning rate leaves every parameter bit-identical") {
  TinySetup s = tiny_setup(11);
  auto before = snapshot_params(s);
  TrainConfig cfg;
  cfg.batch_size = 6;
  cfg.epochs = 2;
  cfg.learning_rate = 0.0;
  cfg.seed = 3;
  train_contrastive(s.iot, s.text, s.windows, s.train_idx, cfg);
  auto after = snapshot_params(s);
  REQUIRE(before.size() == after.size());
  for (size_t i = 0; i < before.size(); ++i) CHECK(allclose(before[i], after[i], 0, 0));
}

TEST_CASE("fixed seed reproduces the loss curve bit-for-bit") {
  TrainConfig cfg;
  cfg.batch_size = 6;
  cfg.epochs = 4;
  cfg.learning_rate = 0.02;
  cfg.seed = 17;

  TinySetup a = tiny_setup(13);
  auto curve_a = train_contrastive(a.iot, a.text, a.windows, a.train_idx, cfg);
  TinySetup b = tiny_setup(13);
  auto curve_b = train_contrastive(b.iot, b.text, b.windows, b.train_idx, cfg);
  REQUIRE(curve_a.size() == curve_b.size());
  for (size_t i = 0; i < curve_a.size(); ++i)
    CHECK(curve_a[i].mean_loss == curve_b[i].mean_loss);  // exact

  auto pa = snapshot_params(a), pb = snapshot_params(b);
  for (size_t i = 0; i < pa.size(); ++i) CHECK(allclose(pa[i], pb[i], 0, 0));
}

TEST_CASE("frozen-prototype training keeps the text branch untouched") {
  TinySetup s = tiny_setup(29);
  Mat frozen = s.text.prototypes();
  Mat soft_before = s.text.soft_prompt.context;

  TrainConfig cfg;
  cfg.batch_size = 6;
  cfg.epochs = 3;
  cfg.learning_rate = 0.02;
  cfg.seed = 5;
  TrainOptions opts;
  opts.learn_text_branch = false;
  opts.fixed_prototypes = &frozen;
  train_contrastive(s.iot, s.text, s.windows, s.train_idx, cfg, opts);
  CHECK(allclose(s.text.soft_prompt.context, soft_before, 0, 0));
}

TEST_CASE("non-finite loss aborts with a batch diagnostic") {
  TinySetup s = tiny_setup(55);
  // poison one window so its embedding and the loss go non-finite
  s.windows[3].data(0, 0) = std::numeric_limits<double>::quiet_NaN();
  TrainConfig cfg;
  cfg.batch_size = static_cast<int>(s.train_idx.size());  // every batch hits the poison
  cfg.epochs = 1;
  cfg.learning_rate = 0.01;
  cfg.seed = 2;
  CHECK_THROWS_WITH_AS(train_contrastive(s.iot, s.text, s.windows, s.train_idx, cfg),
                       doctest::Contains("batch"), Error);
}

TEST_CASE("empty augmentation set makes fine-tuning a no-op") {
  TinySetup s = tiny_setup(61);
  auto before = snapshot_params(s);
  TrainConfig cfg;
  cfg.batch_size = 6;
  cfg.epochs = 3;
  cfg.learning_rate = 0.05;
  cfg.seed = 4;
  auto curve = finetune_with_augmentation(s.iot, s.text, s.windows, s.train_idx, {}, cfg);
  CHECK(curve.empty());
  auto after = snapshot_params(s);
  for (size_t i = 0; i < before.size(); ++i) CHECK(allclose(before[i], after[i], 0, 0));
}

TEST_CASE("train log is line-delimited json") {
  TinySetup s = tiny_setup(41);
  const auto path = fs::temp_directory_path() / "iotzsl_train.log";
  TrainConfig cfg;
  cfg.batch_size = 6;
  cfg.epochs = 2;
  cfg.learning_rate = 0.01;
  cfg.seed = 1;
  TrainOptions opts;
  opts.log_path = path.string();
  train_contrastive(s.iot, s.text, s.windows, s.train_idx, cfg, opts);
  std::ifstream f(path);
  std::string line;
  int lines = 0;
  while (std::getline(f, line)) {
    CHECK(line.find("\"epoch\"") != std::string::npos);
    CHECK(line.find("\"mean_loss\"") != std::string::npos);
    CHECK(line.find("\"wall_seconds\"") != std::string::npos);
    ++lines;
  }
  CHECK(lines == 2);
  fs::remove(path);
}
