#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "iotzsl/gan.hpp"
#include "support/gradcheck.hpp"

using namespace iotzsl;
using testsupport::allclose;

namespace {

// critic with zero weights and constant bias c: D(anything) = c, grad = 0
GanMlp constant_critic(int in_dim, double c) {
  Rng rng(1);
  GanMlp d(in_dim, {4}, 1, rng);
  for (auto& w : d.weights()) w.fill(0.0);
  for (auto& b : d.biases()) b.fill(0.0);
  d.biases().back()(0, 0) = c;
  return d;
}

// single linear layer D(x) = x_0: gradient norm is exactly 1 everywhere
GanMlp unit_gradient_critic(int in_dim) {
  Rng rng(2);
  GanMlp d(in_dim, {}, 1, rng);
  d.weights()[0].fill(0.0);
  d.weights()[0](0, 0) = 1.0;
  d.biases()[0].fill(0.0);
  return d;
}

}  // namespace

TEST_CASE("constant critic gives L_WGAN = -xi exactly") {
  const int x_dim = 6, d = 3, n = 8;
  Rng rng(5);
  Mat real = randn(rng, n, x_dim);
  Mat fake = randn(rng, n, x_dim);
  Mat cond = randn(rng, n, d);
  Mat alphas = rand_uniform(rng, n, 1, 0.0, 1.0);

  GanMlp critic = constant_critic(x_dim + d, 3.7);
  auto parts = wgan_loss_parts(critic, real, fake, cond, alphas, 10.0);
  CHECK(parts.real_score == doctest::Approx(3.7).epsilon(1e-12));
  CHECK(parts.fake_score == doctest::Approx(3.7).epsilon(1e-12));
  CHECK(parts.penalty == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(parts.total() == doctest::Approx(-10.0).epsilon(1e-12));
}

TEST_CASE("unit-gradient critic has zero penalty") {
  const int x_dim = 5, d = 2, n = 6;
  Rng rng(7);
  Mat real = randn(rng, n, x_dim);
  Mat fake = randn(rng, n, x_dim);
  Mat cond = randn(rng, n, d);
  Mat alphas = rand_uniform(rng, n, 1, 0.0, 1.0);

  GanMlp critic = unit_gradient_critic(x_dim + d);
  auto parts = wgan_loss_parts(critic, real, fake, cond, alphas, 10.0);
  CHECK(std::fabs(parts.penalty) < 1e-6);
}

TEST_CASE("real batch fed as both real and fake cancels the score terms") {
  const int x_dim = 4, d = 2, n = 10;
  Rng rng(9);
  Mat real = randn(rng, n, x_dim);
  Mat cond = randn(rng, n, d);
  Mat alphas = rand_uniform(rng, n, 1, 0.0, 1.0);
  GanMlp critic(x_dim + d, {8, 8}, 1, rng);
  auto parts = wgan_loss_parts(critic, real, real, cond, alphas, 10.0);
  CHECK(parts.real_score - parts.fake_score == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("penalty is non-negative, zero iff unit gradient norms") {
  Rng rng(11);
  for (int trial = 0; trial < 10; ++trial) {
    const int x_dim = 3 + rng.uniform_int(4);
    GanMlp critic(x_dim, {6, 6}, 1, rng);
    Mat x = randn(rng, 5, x_dim);
    GanMlp::Cache cache;
    critic.forward(x, &cache);
    Mat g = critic.input_gradient(cache);
    const double p = GanMlp::gradient_penalty_value(g, x_dim);
    CHECK(p >= 0.0);
  }
  GanMlp unit = unit_gradient_critic(4);
  Mat x = randn(rng, 5, 4);
  GanMlp::Cache cache;
  unit.forward(x, &cache);
  CHECK(GanMlp::gradient_penalty_value(unit.input_gradient(cache), 4) ==
        doctest::Approx(0.0).epsilon(1e-15));
}

TEST_CASE("interpolates mix real and fake elementwise") {
  const int x_dim = 3, n = 4;
  Rng rng(13);
  Mat real = randn(rng, n, x_dim);
  Mat fake = randn(rng, n, x_dim);
  Mat alphas = rand_uniform(rng, n, 1, 0.0, 1.0);
  // verified structurally: alpha=1 reproduces real, alpha=0 reproduces fake
  Mat ones(n, 1, 1.0), zeros(n, 1, 0.0);
  GanMlp critic = unit_gradient_critic(x_dim + 1);
  Mat cond(n, 1, 0.0);
  auto p1 = wgan_loss_parts(critic, real, fake, cond, ones, 1.0);
  auto p0 = wgan_loss_parts(critic, real, fake, cond, zeros, 1.0);
  // with D(x)=x_0, penalty is 0 in both cases and scores depend only on data
  CHECK(std::fabs(p1.penalty) < 1e-12);
  CHECK(std::fabs(p0.penalty) < 1e-12);
  // out-of-range alpha rejected
  Mat bad(n, 1, 1.5);
  CHECK_THROWS_AS(wgan_loss_parts(critic, real, fake, cond, bad, 1.0), Error);
}

TEST_CASE("mlp backward matches finite differences") {
  Rng rng(17);
  GanMlp net(5, {7, 6}, 3, rng);
  Mat x = randn(rng, 4, 5);
  Mat probe = randn(rng, 4, 3);

  GanMlp::Cache cache;
  net.forward(x, &cache);
  std::vector<Mat> gw, gb;
  Mat dx = net.backward(cache, probe, gw, gb);

  auto loss_of = [&]() { return dot_all(net.forward(x), probe); };
  for (size_t l = 0; l < net.weights().size(); ++l) {
    Mat num = testsupport::numeric_grad(net.weights()[l], [&](const Mat& w) {
      Mat saved = net.weights()[l];
      net.weights()[l] = w;
      const double v = loss_of();
      net.weights()[l] = saved;
      return v;
    });
    CHECK(allclose(gw[l], num, 1e-4, 1e-7));
  }
  Mat num_x = testsupport::numeric_grad(x, [&](const Mat& xx) {
    return dot_all(net.forward(xx), probe);
  });
  CHECK(allclose(dx, num_x, 1e-4, 1e-7));
}

TEST_CASE("gradient-penalty double backprop matches finite differences") {
  Rng rng(19);
  for (int trial = 0; trial < 5; ++trial) {
    const int x_dim = 4, cond_dim = 2;
    GanMlp critic(x_dim + cond_dim, {8, 6}, 1, rng);
    Mat x = randn(rng, 6, x_dim + cond_dim);

    GanMlp::Cache cache;
    critic.forward(x, &cache);
    critic.input_gradient(cache);
    std::vector<Mat> gp_w;
    const double p0 = critic.gradient_penalty_backward(cache, x_dim, gp_w);
    CHECK(p0 >= 0.0);

    auto penalty_of = [&]() {
      GanMlp::Cache c;
      critic.forward(x, &c);
      Mat g = critic.input_gradient(c);
      return GanMlp::gradient_penalty_value(g, x_dim);
    };
    for (size_t l = 0; l < critic.weights().size(); ++l) {
      Mat num = testsupport::numeric_grad(critic.weights()[l], [&](const Mat& w) {
        Mat saved = critic.weights()[l];
        critic.weights()[l] = w;
        const double v = penalty_of();
        critic.weights()[l] = saved;
        return v;
      }, 1e-6);
      CHECK(allclose(gp_w[l], num, 1e-4, 1e-6));
    }
  }
}

TEST_CASE("classification loss identities") {
  Rng rng(23);
  LinearSoftmax theta(4, {0, 1, 2}, rng);
  theta.trained = true;

  // uniform classifier: zero weights -> -log(1/3)
  theta.W.fill(0.0);
  theta.b.fill(0.0);
  Mat x = randn(rng, 5, 4);
  CHECK(classification_loss(theta, x, {0, 1, 2, 0, 1}) ==
        doctest::Approx(std::log(3.0)).epsilon(1e-12));

  // probability ~1 on the label -> loss ~0
  theta.b(0, 0) = 50.0;
  CHECK(classification_loss(theta, x, {0, 0, 0, 0, 0}) == doctest::Approx(0.0).epsilon(1e-9));

  // probability 0.5 on the label -> log 2
  theta.b.fill(0.0);
  theta.b(0, 0) = std::log(2.0);  // softmax over {log2, 0, -inf...}: trim to two classes
  LinearSoftmax two(4, {0, 1}, rng);
  two.trained = true;
  two.W.fill(0.0);
  two.b.fill(0.0);
  CHECK(classification_loss(two, x, {0, 0, 0, 0, 0}) ==
        doctest::Approx(std::log(2.0)).epsilon(1e-12));

  // label outside the class set
  CHECK_THROWS_AS(classification_loss(theta, x, {0, 9, 0, 0, 0}), Error);
}

namespace {

// 1-D-per-channel Gaussian toy data: class 0 centered at +2, class 1 at -2.
std::vector<SensorWindow> toy_gan_windows(int per_class, Rng& rng) {
  std::vector<SensorWindow> out;
  for (int c = 0; c < 2; ++c)
    for (int i = 0; i < per_class; ++i) {
      SensorWindow w;
      w.data = Mat(1, 2);
      for (size_t k = 0; k < w.data.size(); ++k)
        w.data[k] = (c == 0 ? 2.0 : -2.0) + 0.3 * rng.gaussian();
      w.label = c;
      out.push_back(std::move(w));
    }
  return out;
}

}  // namespace

TEST_CASE("toy conditional gan: moment match and live conditioning") {
  Rng rng(31);
  auto windows = toy_gan_windows(80, rng);
  std::vector<int> idx(windows.size());
  for (size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<int>(i);

  Mat prototypes(2, 4, 0.0);
  prototypes(0, 0) = 1.0;
  prototypes(1, 1) = 1.0;

  LinearSoftmax theta(2, {0, 1}, rng);
  {
    Mat x(static_cast<int>(windows.size()), 2);
    std::vector<int> y(windows.size());
    for (size_t i = 0; i < windows.size(); ++i) {
      x(static_cast<int>(i), 0) = windows[i].data(0, 0);
      x(static_cast<int>(i), 1) = windows[i].data(0, 1);
      y[i] = windows[i].label;
    }
    nn::SgdMomentum opt(0.1, 0.9);
    for (int e = 0; e < 100; ++e) theta.train_step(x, y, opt);
  }

  GanConfig cfg;
  cfg.noise_dim = 4;
  cfg.gen_hidden = {32};
  cfg.critic_hidden = {32};
  cfg.epochs = 120;
  cfg.batch_size = 32;
  cfg.lr = 0.005;
  cfg.critic_steps = 3;
  cfg.seed = 7;
  TrainedGan gan = train_gan(windows, idx, prototypes, theta, cfg);

  // per-class sample mean within 0.5 sigma-ish of the real mean
  auto gen_mean = [&](int cls) {
    auto samples = synthesize_unseen(gan.generator, prototypes, {cls}, 200, 1, 2,
                                     Modality::imu, 99);
    double m = 0.0;
    for (const auto& s : samples) m += (s.data(0, 0) + s.data(0, 1)) / 2.0;
    return m / samples.size();
  };
  const double m0 = gen_mean(0);
  const double m1 = gen_mean(1);
  CHECK(std::fabs(m0 - 2.0) < 1.0);
  CHECK(std::fabs(m1 + 2.0) < 1.0);
  // conditioning is live: the two conditional distributions differ clearly
  CHECK(m0 - m1 > 2.0);

  // determinism: same seeds give identical synthesized batches
  auto a = synthesize_unseen(gan.generator, prototypes, {0}, 3, 1, 2, Modality::imu, 5);
  auto b = synthesize_unseen(gan.generator, prototypes, {0}, 3, 1, 2, Modality::imu, 5);
  for (size_t i = 0; i < a.size(); ++i)
    CHECK(allclose(a[i].data, b[i].data, 0, 0));
  // labels are exactly the requested unseen classes
  for (const auto& s : a) CHECK(s.label == 0);

  // count arithmetic: 2 classes x 5 each
  auto batch = synthesize_unseen(gan.generator, prototypes, {0, 1}, 5, 1, 2, Modality::imu, 1);
  CHECK(batch.size() == 10);
}

TEST_CASE("zero generator learning rate leaves the generator unchanged") {
  Rng rng(41);
  auto windows = toy_gan_windows(20, rng);
  std::vector<int> idx(windows.size());
  for (size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<int>(i);
  Mat prototypes = Mat::identity(2);
  LinearSoftmax theta(2, {0, 1}, rng);
  theta.trained = true;

  GanConfig cfg;
  cfg.noise_dim = 3;
  cfg.gen_hidden = {8};
  cfg.critic_hidden = {8};
  cfg.epochs = 2;
  cfg.batch_size = 8;
  cfg.lr = 0.0;
  cfg.seed = 3;
  TrainedGan gan = train_gan(windows, idx, prototypes, theta, cfg);

  Rng ref_rng(cfg.seed ^ 0x6a77ULL);
  GanMlp fresh_gen(cfg.noise_dim + 2, cfg.gen_hidden, 2, ref_rng);
  for (size_t l = 0; l < fresh_gen.weights().size(); ++l)
    CHECK(allclose(gan.generator.weights()[l], fresh_gen.weights()[l], 0, 0));
}

TEST_CASE("default_n_aug is the median per-class count") {
  std::vector<SensorWindow> windows;
  std::vector<int> idx;
  auto add = [&](int label, int count) {
    for (int i = 0; i < count; ++i) {
      SensorWindow w;
      w.data = Mat(1, 1, 0.0);
      w.label = label;
      idx.push_back(static_cast<int>(windows.size()));
      windows.push_back(std::move(w));
    }
  };
  add(0, 3);
  add(1, 10);
  add(2, 5);
  CHECK(default_n_aug(windows, idx) == 5);
}
