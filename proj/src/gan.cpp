#include "iotzsl/gan.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

using namespace iotzsl::nn;

namespace iotzsl {

GanMlp::GanMlp(int in_dim, const std::vector<int>& hidden, int out_dim, Rng& rng, double leak)
    : leak_(leak) {
  int prev = in_dim;
  for (int h : hidden) {
    const double s = std::sqrt(2.0 / prev);
    W_.push_back(randn(rng, prev, h, s));
    b_.push_back(Mat(1, h, 0.0));
    prev = h;
  }
  const double s = std::sqrt(1.0 / prev);
  W_.push_back(randn(rng, prev, out_dim, s));
  b_.push_back(Mat(1, out_dim, 0.0));
}

Mat GanMlp::forward(const Mat& x, Cache* cache) const {
  IOTZSL_REQUIRE(x.cols() == in_dim(), ErrKind::validation,
                 "GanMlp: input width " + std::to_string(x.cols()) + " != " +
                     std::to_string(in_dim()));
  if (cache) {
    cache->pre.clear();
    cache->act.clear();
    cache->dz.clear();
    cache->act.push_back(x);
  }
  Mat a = x;
  for (size_t l = 0; l < W_.size(); ++l) {
    Mat z = matmul(a, W_[l]);
    for (int i = 0; i < z.rows(); ++i)
      for (int j = 0; j < z.cols(); ++j) z(i, j) += b_[l](0, j);
    const bool last = l + 1 == W_.size();
    Mat act = z;
    if (!last)
      for (size_t i = 0; i < act.size(); ++i)
        if (act[i] < 0.0) act[i] *= leak_;
    if (cache) {
      cache->pre.push_back(std::move(z));
      cache->act.push_back(act);
    }
    a = std::move(act);
  }
  return a;
}

Mat GanMlp::backward(const Cache& cache, const Mat& dout, std::vector<Mat>& grad_w,
                     std::vector<Mat>& grad_b) const {
  const size_t L = W_.size();
  if (grad_w.size() != L) {
    grad_w.assign(L, Mat());
    grad_b.assign(L, Mat());
  }
  Mat delta = dout;  // dL/dZ_L (output layer is linear)
  for (size_t l = L; l-- > 0;) {
    Mat gw = matmul_tn(cache.act[l], delta);
    Mat gb(1, delta.cols(), 0.0);
    for (int i = 0; i < delta.rows(); ++i)
      for (int j = 0; j < delta.cols(); ++j) gb(0, j) += delta(i, j);
    if (grad_w[l].empty()) {
      grad_w[l] = std::move(gw);
      grad_b[l] = std::move(gb);
    } else {
      grad_w[l] += gw;
      grad_b[l] += gb;
    }
    if (l == 0) {
      return matmul_nt(delta, W_[0]);
    }
    delta = matmul_nt(delta, W_[l]);  // dL/dA_{l-1}
    const Mat& z_prev = cache.pre[l - 1];
    for (size_t i = 0; i < delta.size(); ++i)
      if (z_prev[i] <= 0.0) delta[i] *= leak_;
  }
  return Mat();
}

Mat GanMlp::input_gradient(Cache& cache) const {
  IOTZSL_REQUIRE(out_dim() == 1, ErrKind::validation, "input_gradient needs a scalar output");
  const size_t L = W_.size();
  const int n = cache.act[0].rows();
  cache.dz.assign(L, Mat());
  cache.dz[L - 1] = Mat(n, 1, 1.0);
  for (size_t l = L - 1; l-- > 0;) {
    Mat u = matmul_nt(cache.dz[l + 1], W_[l + 1]);  // dOut/dA_l
    const Mat& z = cache.pre[l];
    for (size_t i = 0; i < u.size(); ++i)
      if (z[i] <= 0.0) u[i] *= leak_;
    cache.dz[l] = std::move(u);
  }
  return matmul_nt(cache.dz[0], W_[0]);
}

double GanMlp::gradient_penalty_value(const Mat& input_grad, int x_dim) {
  double acc = 0.0;
  for (int i = 0; i < input_grad.rows(); ++i) {
    double s = 0.0;
    for (int j = 0; j < x_dim; ++j) s += input_grad(i, j) * input_grad(i, j);
    const double norm = std::sqrt(s);
    acc += (norm - 1.0) * (norm - 1.0);
  }
  return acc / input_grad.rows();
}

double GanMlp::gradient_penalty_backward(const Cache& cache, int x_dim,
                                         std::vector<Mat>& grad_w) const {
  IOTZSL_REQUIRE(!cache.dz.empty(), ErrKind::state,
                 "gradient_penalty_backward: run input_gradient first");
  const size_t L = W_.size();
  const int n = cache.act[0].rows();
  Mat g = matmul_nt(cache.dz[0], W_[0]);  // [n x in_dim]

  // dP/dG, zero over the condition columns
  Mat q(n, g.cols(), 0.0);
  double penalty = 0.0;
  for (int i = 0; i < n; ++i) {
    double s = 0.0;
    for (int j = 0; j < x_dim; ++j) s += g(i, j) * g(i, j);
    const double norm = std::sqrt(s);
    penalty += (norm - 1.0) * (norm - 1.0);
    if (norm > 1e-12) {
      const double coef = 2.0 * (norm - 1.0) / (norm * n);
      for (int j = 0; j < x_dim; ++j) q(i, j) = coef * g(i, j);
    }
  }
  penalty /= n;

  if (grad_w.size() != L) grad_w.assign(L, Mat());
  auto add_grad = [&grad_w](size_t l, Mat g_l) {
    if (grad_w[l].empty())
      grad_w[l] = std::move(g_l);
    else
      grad_w[l] += g_l;
  };

  // reverse pass over the input-gradient computation, activation patterns
  // held fixed (exact a.e. for leaky-relu)
  add_grad(0, matmul_tn(q, cache.dz[0]));
  Mat r = matmul(q, W_[0]);  // dP/d(dz[0])
  for (size_t l = 0; l + 1 < L; ++l) {
    Mat m = r;  // dP/dY where dz[l] = Y .* S_l
    const Mat& z = cache.pre[l];
    for (size_t i = 0; i < m.size(); ++i)
      if (z[i] <= 0.0) m[i] *= leak_;
    add_grad(l + 1, matmul_tn(m, cache.dz[l + 1]));
    if (l + 2 < L) r = matmul(m, W_[l + 1]);  // dP/d(dz[l+1])
  }
  return penalty;
}

void GanMlp::visit(const std::string& prefix, const ParamVisitor& f) {
  for (size_t l = 0; l < W_.size(); ++l) {
    f(prefix + ".W" + std::to_string(l), W_[l]);
    f(prefix + ".b" + std::to_string(l), b_[l]);
  }
}

namespace {

Mat concat_cols_mat(const Mat& a, const Mat& b) {
  IOTZSL_REQUIRE(a.rows() == b.rows(), ErrKind::validation, "concat_cols: row mismatch");
  Mat out(a.rows(), a.cols() + b.cols());
  for (int i = 0; i < a.rows(); ++i) {
    for (int j = 0; j < a.cols(); ++j) out(i, j) = a(i, j);
    for (int j = 0; j < b.cols(); ++j) out(i, a.cols() + j) = b(i, j);
  }
  return out;
}

Mat flatten_window(const Mat& w) {
  Mat out(1, w.rows() * w.cols());
  for (int c = 0; c < w.rows(); ++c)
    for (int t = 0; t < w.cols(); ++t) out(0, c * w.cols() + t) = w(c, t);
  return out;
}

Mat unflatten_window(const Mat& row, int channels, int timesteps) {
  Mat out(channels, timesteps);
  for (int c = 0; c < channels; ++c)
    for (int t = 0; t < timesteps; ++t) out(c, t) = row(0, c * timesteps + t);
  return out;
}

}  // namespace

WganLossParts wgan_loss_parts(const GanMlp& critic, const Mat& real_x, const Mat& fake_x,
                              const Mat& cond, const Mat& alphas, double xi) {
  IOTZSL_REQUIRE(real_x.same_shape(fake_x), ErrKind::validation,
                 "wgan_loss: real/fake batch shape mismatch");
  IOTZSL_REQUIRE(real_x.rows() == cond.rows() && alphas.rows() == real_x.rows(),
                 ErrKind::validation, "wgan_loss: batch size mismatch");
  const int n = real_x.rows();
  const int x_dim = real_x.cols();

  Mat d_real = const_cast<GanMlp&>(critic).forward(concat_cols_mat(real_x, cond));
  Mat d_fake = const_cast<GanMlp&>(critic).forward(concat_cols_mat(fake_x, cond));

  Mat interp(n, x_dim);
  for (int i = 0; i < n; ++i) {
    const double a = alphas(i, 0);
    IOTZSL_REQUIRE(a >= 0.0 && a <= 1.0, ErrKind::validation, "wgan_loss: alpha outside [0,1]");
    for (int j = 0; j < x_dim; ++j)
      interp(i, j) = a * real_x(i, j) + (1.0 - a) * fake_x(i, j);
  }
  GanMlp::Cache cache;
  const_cast<GanMlp&>(critic).forward(concat_cols_mat(interp, cond), &cache);
  Mat grad = const_cast<GanMlp&>(critic).input_gradient(cache);

  WganLossParts parts;
  parts.xi = xi;
  for (int i = 0; i < n; ++i) {
    parts.real_score += d_real(i, 0) / n;
    parts.fake_score += d_fake(i, 0) / n;
  }
  parts.penalty = GanMlp::gradient_penalty_value(grad, x_dim);
  IOTZSL_REQUIRE(std::isfinite(parts.penalty), ErrKind::state,
                 "wgan_loss: non-finite gradient penalty (exploding critic)");
  return parts;
}

WganLossParts wgan_loss(const GanMlp& critic, const GanMlp& generator, const Mat& real_x,
                        const Mat& cond, double xi, Rng& rng) {
  const int n = real_x.rows();
  Mat z = randn(rng, n, generator.in_dim() - cond.cols());
  Mat fake = const_cast<GanMlp&>(generator).forward(concat_cols_mat(z, cond));
  Mat alphas = rand_uniform(rng, n, 1, 0.0, 1.0);
  return wgan_loss_parts(critic, real_x, fake, cond, alphas, xi);
}

double classification_loss(const LinearSoftmax& classifier, const Mat& x,
                           const std::vector<int>& labels) {
  return classifier.cross_entropy(x, labels);
}

namespace {

struct GanOptimizer {
  SgdMomentum opt;
  explicit GanOptimizer(double lr, double momentum) : opt(lr, momentum) {}
  void step(GanMlp& net, std::vector<Mat>& gw, std::vector<Mat>& gb) {
    for (size_t l = 0; l < net.weights().size(); ++l) {
      if (!gw[l].empty()) opt.apply(net.weights()[l], gw[l]);
      if (!gb[l].empty()) opt.apply(net.biases()[l], gb[l]);
    }
  }
};

}  // namespace

TrainedGan train_gan(const std::vector<SensorWindow>& windows,
                     const std::vector<int>& train_indices, const Mat& prototypes,
                     const LinearSoftmax& theta, const GanConfig& cfg) {
  cfg.validate();
  IOTZSL_REQUIRE(!train_indices.empty(), ErrKind::validation, "train_gan: no training windows");
  IOTZSL_REQUIRE(theta.trained, ErrKind::state, "train_gan: classifier theta is untrained");

  const int channels = windows[static_cast<size_t>(train_indices[0])].data.rows();
  const int timesteps = windows[static_cast<size_t>(train_indices[0])].data.cols();
  const int x_dim = channels * timesteps;
  const int d = prototypes.cols();

  Mat data(static_cast<int>(train_indices.size()), x_dim);
  std::vector<int> labels(train_indices.size());
  for (size_t i = 0; i < train_indices.size(); ++i) {
    const auto& w = windows[static_cast<size_t>(train_indices[i])];
    const Mat flat = flatten_window(w.data);
    for (int j = 0; j < x_dim; ++j) data(static_cast<int>(i), j) = flat(0, j);
    labels[i] = w.label;
  }

  Rng rng(cfg.seed ^ 0x6a77ULL);
  TrainedGan out;
  out.generator = GanMlp(cfg.noise_dim + d, cfg.gen_hidden, x_dim, rng);
  out.critic = GanMlp(x_dim + d, cfg.critic_hidden, 1, rng);

  GanOptimizer gen_opt(cfg.lr, cfg.momentum);
  GanOptimizer critic_opt(cfg.lr, cfg.momentum);

  const int n = data.rows();
  const int steps = std::max(1, n / cfg.batch_size);

  auto draw_batch = [&](Mat& bx, Mat& bc, std::vector<int>& by) {
    const int bsz = std::min(cfg.batch_size, n);
    bx = Mat(bsz, x_dim);
    bc = Mat(bsz, d);
    by.resize(static_cast<size_t>(bsz));
    for (int i = 0; i < bsz; ++i) {
      const int pick = rng.uniform_int(n);
      for (int j = 0; j < x_dim; ++j) bx(i, j) = data(pick, j);
      const int y = labels[static_cast<size_t>(pick)];
      for (int j = 0; j < d; ++j) bc(i, j) = prototypes(y, j);
      by[static_cast<size_t>(i)] = y;
    }
  };

  GanMlp best_gen = out.generator;
  double best_w = std::numeric_limits<double>::infinity();
  int collapse_streak = 0;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    double w_est_sum = 0.0;
    int w_est_count = 0;
    for (int step = 0; step < steps; ++step) {
      // critic updates
      for (int cs = 0; cs < cfg.critic_steps; ++cs) {
        Mat bx, bc;
        std::vector<int> by;
        draw_batch(bx, bc, by);
        const int bsz = bx.rows();

        Mat z = randn(rng, bsz, cfg.noise_dim);
        Mat fake = out.generator.forward(concat_cols_mat(z, bc));

        std::vector<Mat> gw, gb;
        GanMlp::Cache cache_real, cache_fake;
        out.critic.forward(concat_cols_mat(bx, bc), &cache_real);
        out.critic.forward(concat_cols_mat(fake, bc), &cache_fake);
        // critic minimizes fake - real + xi * penalty
        Mat d_up(bsz, 1, 1.0 / bsz);
        Mat d_down(bsz, 1, -1.0 / bsz);
        out.critic.backward(cache_fake, d_up, gw, gb);
        out.critic.backward(cache_real, d_down, gw, gb);

        Mat interp(bsz, x_dim);
        for (int i = 0; i < bsz; ++i) {
          const double a = rng.uniform();
          for (int j = 0; j < x_dim; ++j)
            interp(i, j) = a * bx(i, j) + (1.0 - a) * fake(i, j);
        }
        GanMlp::Cache cache_interp;
        out.critic.forward(concat_cols_mat(interp, bc), &cache_interp);
        out.critic.input_gradient(cache_interp);
        std::vector<Mat> gp_w;
        const double penalty =
            out.critic.gradient_penalty_backward(cache_interp, x_dim, gp_w);
        IOTZSL_REQUIRE(std::isfinite(penalty), ErrKind::state,
                       "train_gan: non-finite penalty at epoch " + std::to_string(epoch));
        for (size_t l = 0; l < gw.size(); ++l)
          if (!gp_w[l].empty()) gw[l] += gp_w[l] * cfg.penalty_coeff;

        critic_opt.step(out.critic, gw, gb);

        double real_mean = 0.0, fake_mean = 0.0;
        for (int i = 0; i < bsz; ++i) {
          real_mean += cache_real.act.back()(i, 0) / bsz;
          fake_mean += cache_fake.act.back()(i, 0) / bsz;
        }
        w_est_sum += real_mean - fake_mean;
        ++w_est_count;
      }

      // generator update: minimize -E[D(fake)] + cls_weight * CE(theta(fake))
      Mat bx, bc;
      std::vector<int> by;
      draw_batch(bx, bc, by);
      const int bsz = bx.rows();
      Mat z = randn(rng, bsz, cfg.noise_dim);
      GanMlp::Cache gen_cache;
      Mat fake = out.generator.forward(concat_cols_mat(z, bc), &gen_cache);

      GanMlp::Cache critic_cache;
      out.critic.forward(concat_cols_mat(fake, bc), &critic_cache);
      std::vector<Mat> cw, cb;  // discarded: critic is frozen in this step
      Mat dcrit(bsz, 1, -1.0 / bsz);
      Mat dfake_full = out.critic.backward(critic_cache, dcrit, cw, cb);
      Mat dfake(bsz, x_dim);
      for (int i = 0; i < bsz; ++i)
        for (int j = 0; j < x_dim; ++j) dfake(i, j) = dfake_full(i, j);

      if (cfg.cls_weight > 0.0) {
        Mat dlogits;
        theta.cross_entropy(fake, by, &dlogits);
        Mat dcls = matmul_nt(dlogits, theta.W);
        dfake += dcls * cfg.cls_weight;
      }

      std::vector<Mat> gw, gb;
      out.generator.backward(gen_cache, dfake, gw, gb);
      gen_opt.step(out.generator, gw, gb);
    }

    const double w_est = w_est_sum / std::max(1, w_est_count);
    out.wasserstein_estimate.push_back(w_est);
    if (std::fabs(w_est) < best_w) {
      best_w = std::fabs(w_est);
      best_gen = out.generator;
    }

    // mode-collapse heuristic: per-dimension variance of a probe batch
    {
      Mat zc = randn(rng, 16, cfg.noise_dim);
      Mat cond(16, d);
      for (int i = 0; i < 16; ++i) {
        const int y = labels[static_cast<size_t>(rng.uniform_int(n))];
        for (int j = 0; j < d; ++j) cond(i, j) = prototypes(y, j);
      }
      Mat probe = out.generator.forward(concat_cols_mat(zc, cond));
      double var = 0.0;
      for (int j = 0; j < x_dim; ++j) {
        double mu = 0.0;
        for (int i = 0; i < 16; ++i) mu += probe(i, j) / 16.0;
        for (int i = 0; i < 16; ++i) var += (probe(i, j) - mu) * (probe(i, j) - mu);
      }
      var /= 16.0 * x_dim;
      collapse_streak = var < cfg.collapse_variance_floor ? collapse_streak + 1 : 0;
    }
    if (collapse_streak >= 10) {
      warn("train_gan: generator output variance below floor for 10 epochs; keeping the best "
           "checkpoint by Wasserstein estimate");
      out.generator = best_gen;
      out.collapsed = true;
      break;
    }
  }
  return out;
}

std::vector<SensorWindow> synthesize_unseen(const GanMlp& generator, const Mat& prototypes,
                                            const std::vector<int>& unseen_classes, int n_aug,
                                            int channels, int timesteps, Modality modality,
                                            uint64_t seed) {
  IOTZSL_REQUIRE(n_aug >= 0, ErrKind::validation, "n_aug must be >= 0");
  const int d = prototypes.cols();
  const int noise_dim = generator.in_dim() - d;
  Rng rng(seed ^ 0x5eedau);
  std::vector<SensorWindow> out;
  out.reserve(static_cast<size_t>(n_aug) * unseen_classes.size());
  for (int cls : unseen_classes) {
    IOTZSL_REQUIRE(cls >= 0 && cls < prototypes.rows(), ErrKind::validation,
                   "unseen class id has no prototype row");
    for (int i = 0; i < n_aug; ++i) {
      Mat z = randn(rng, 1, noise_dim);
      Mat cond(1, d);
      for (int j = 0; j < d; ++j) cond(0, j) = prototypes(cls, j);
      Mat flat = const_cast<GanMlp&>(generator).forward(concat_cols_mat(z, cond));
      SensorWindow w;
      w.data = unflatten_window(flat, channels, timesteps);
      w.label = cls;
      w.modality = modality;
      w.subject_id = "synthesized";
      out.push_back(std::move(w));
    }
  }
  return out;
}

int default_n_aug(const std::vector<SensorWindow>& windows,
                  const std::vector<int>& train_indices) {
  std::map<int, int> counts;
  for (int idx : train_indices) ++counts[windows[static_cast<size_t>(idx)].label];
  std::vector<int> values;
  for (const auto& [_, c] : counts) values.push_back(c);
  IOTZSL_REQUIRE(!values.empty(), ErrKind::validation, "default_n_aug: empty training set");
  std::sort(values.begin(), values.end());
  return values[values.size() / 2];
}

std::vector<TrainLogEntry> finetune_with_augmentation(
    IotBranch& iot, TextBranch& text, const std::vector<SensorWindow>& windows,
    const std::vector<int>& train_indices, const std::vector<SensorWindow>& augmented,
    const TrainConfig& cfg, const std::string& log_path) {
  if (augmented.empty() || cfg.epochs == 0) return {};  // nothing to fine-tune on

  std::vector<SensorWindow> mixed = windows;
  std::vector<int> indices = train_indices;
  for (const auto& w : augmented) {
    mixed.push_back(w);
    indices.push_back(static_cast<int>(mixed.size()) - 1);
  }
  const Mat frozen = text.prototypes();
  TrainOptions opts;
  opts.learn_text_branch = false;
  opts.fixed_prototypes = &frozen;
  opts.log_path = log_path;
  return train_contrastive(iot, text, mixed, indices, cfg, opts);
}

}  // namespace iotzsl
