#include "iotzsl/contrastive.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <map>
#include <set>

#include <json.hpp>

using namespace iotzsl::nn;

namespace iotzsl {

Var supervised_contrastive_loss_var(Tape& t, Var embeddings, Var prototypes,
                                    const std::vector<int>& labels, double tau) {
  const int n_b = t.val(embeddings).rows();
  const int n_t = t.val(prototypes).rows();
  const double inv_tau = 1.0 / tau;

  // constant masks derived from the labels
  Mat off_diag_e(n_b, n_b, 1.0);
  Mat pos_mask(n_b, n_b, 0.0);
  for (int i = 0; i < n_b; ++i) {
    off_diag_e(i, i) = 0.0;
    for (int a = 0; a < n_b; ++a)
      if (a != i && labels[static_cast<size_t>(a)] == labels[static_cast<size_t>(i)])
        pos_mask(i, a) = 1.0;
  }
  Mat own(n_b, n_t, 0.0), other(n_b, n_t, 1.0);
  for (int i = 0; i < n_b; ++i) {
    own(i, labels[static_cast<size_t>(i)]) = 1.0;
    other(i, labels[static_cast<size_t>(i)]) = 0.0;
  }
  Mat off_diag_t(n_t, n_t, 1.0);
  for (int j = 0; j < n_t; ++j) off_diag_t(j, j) = 0.0;
  Mat inv_pos_count(n_b, 1, 0.0);
  for (int i = 0; i < n_b; ++i) {
    double p = 0.0;
    for (int a = 0; a < n_b; ++a) p += pos_mask(i, a);
    inv_pos_count(i, 0) = 1.0 / (p + 1.0);
  }

  Var s_ee = t.scale(t.matmul_nt(embeddings, embeddings), inv_tau);  // [n_b x n_b]
  Var s_et = t.scale(t.matmul_nt(embeddings, prototypes), inv_tau);  // [n_b x n_t]
  Var s_tt = t.scale(t.matmul_nt(prototypes, prototypes), inv_tau);  // [n_t x n_t]

  // alignment term: (sum of positive-pair similarities + own prototype) / (|P(i)|+1)
  Var pos_sum = t.sum_rows(t.mul_const(s_ee, pos_mask));        // [n_b x 1]
  Var own_sum = t.sum_rows(t.mul_const(s_et, own));             // [n_b x 1]
  Var aligned = t.mul_const(t.add(pos_sum, own_sum), inv_pos_count);

  // log-partition: other samples, other prototypes, prototype-prototype pairs
  Var z_samples = t.sum_rows(t.mul_const(t.exp_elem(s_ee), off_diag_e));
  Var z_protos = t.sum_rows(t.mul_const(t.exp_elem(s_et), other));
  Var tt_rowsum = t.sum_rows(t.mul_const(t.exp_elem(s_tt), off_diag_t));  // [n_t x 1]
  Var z_tt = t.matmul(t.constant(own), tt_rowsum);                        // [n_b x 1]
  Var log_z = t.log_elem(t.add(t.add(z_samples, z_protos), z_tt));

  return t.sub(t.sum_all(log_z), t.sum_all(aligned));
}

namespace {

void validate_contrastive_inputs(const Mat& e, const std::vector<int>& labels, const Mat& t,
                                 double norm_tol = 1e-3) {
  IOTZSL_REQUIRE(e.rows() >= 2, ErrKind::validation, "contrastive loss needs >= 2 samples");
  IOTZSL_REQUIRE(static_cast<int>(labels.size()) == e.rows(), ErrKind::validation,
                 "labels/embeddings size mismatch");
  std::set<int> distinct(labels.begin(), labels.end());
  IOTZSL_REQUIRE(distinct.size() >= 2, ErrKind::validation,
                 "contrastive loss needs >= 2 distinct classes in the batch");
  for (int lab : distinct)
    IOTZSL_REQUIRE(lab >= 0 && lab < t.rows(), ErrKind::validation,
                   "label " + std::to_string(lab) + " has no prototype row");
  IOTZSL_REQUIRE(e.cols() == t.cols(), ErrKind::validation,
                 "embedding/prototype dimension mismatch");
  for (int i = 0; i < e.rows(); ++i)
    IOTZSL_REQUIRE(std::fabs(row_norm(e, i) - 1.0) < norm_tol, ErrKind::validation,
                   "embedding row " + std::to_string(i) + " is not unit-norm");
  for (int j = 0; j < t.rows(); ++j)
    IOTZSL_REQUIRE(std::fabs(row_norm(t, j) - 1.0) < norm_tol, ErrKind::validation,
                   "prototype row " + std::to_string(j) + " is not unit-norm");
}

}  // namespace

double supervised_contrastive_loss(const Mat& embeddings, const std::vector<int>& labels,
                                   const Mat& prototypes, double tau, Mat* grad_e, Mat* grad_t) {
  IOTZSL_REQUIRE(tau > 0.0, ErrKind::validation, "tau must be positive");
  validate_contrastive_inputs(embeddings, labels, prototypes);
  Tape t;
  Var e = t.constant(embeddings);
  Var p = t.constant(prototypes);
  Var loss = supervised_contrastive_loss_var(t, e, p, labels, tau);
  if (grad_e || grad_t) {
    t.backward(loss);
    if (grad_e) *grad_e = t.grad(e);
    if (grad_t) *grad_t = t.grad(p);
  }
  return t.val(loss)(0, 0);
}

Var embedding_supcon_loss_var(Tape& t, Var embeddings, const std::vector<int>& labels,
                              double tau) {
  const int n_b = t.val(embeddings).rows();
  const double inv_tau = 1.0 / tau;
  Mat off_diag(n_b, n_b, 1.0);
  Mat pos_mask(n_b, n_b, 0.0);
  Mat inv_pos(n_b, 1, 0.0);
  for (int i = 0; i < n_b; ++i) {
    off_diag(i, i) = 0.0;
    double cnt = 0.0;
    for (int a = 0; a < n_b; ++a)
      if (a != i && labels[static_cast<size_t>(a)] == labels[static_cast<size_t>(i)]) {
        pos_mask(i, a) = 1.0;
        cnt += 1.0;
      }
    inv_pos(i, 0) = cnt > 0.0 ? 1.0 / cnt : 0.0;  // samples without positives drop out
  }
  Var s = t.scale(t.matmul_nt(embeddings, embeddings), inv_tau);
  Var pos_sum = t.mul_const(t.sum_rows(t.mul_const(s, pos_mask)), inv_pos);
  Var log_z = t.log_elem(t.sum_rows(t.mul_const(t.exp_elem(s), off_diag)));
  // -1/|P(i)| sum_p (s_ip - log Z_i) summed over i
  Var z_weighted = t.mul_const(log_z, inv_pos);
  Mat pos_count(n_b, 1, 0.0);
  for (int i = 0; i < n_b; ++i) {
    double cnt = 0.0;
    for (int a = 0; a < n_b; ++a) cnt += pos_mask(i, a);
    pos_count(i, 0) = cnt;
  }
  Var z_total = t.mul_const(z_weighted, pos_count);  // log Z_i added once per positive
  return t.sub(t.sum_all(z_total), t.sum_all(pos_sum));
}

std::vector<int> sample_contrastive_batch(const std::vector<int>& pool_indices,
                                          const std::vector<int>& pool_labels, int batch_size,
                                          Rng& rng) {
  IOTZSL_REQUIRE(pool_indices.size() == pool_labels.size(), ErrKind::validation,
                 "pool indices/labels size mismatch");
  std::map<int, std::vector<int>> by_class;
  for (size_t i = 0; i < pool_indices.size(); ++i)
    by_class[pool_labels[i]].push_back(pool_indices[i]);
  IOTZSL_REQUIRE(by_class.size() >= 2, ErrKind::validation,
                 "batch sampler needs >= 2 classes in the training pool");

  std::vector<int> classes;
  for (const auto& [c, _] : by_class) classes.push_back(c);
  rng.shuffle(classes);
  const int pairs = batch_size / 2;
  const int n_cls = std::min<int>(static_cast<int>(classes.size()), std::max(2, pairs));

  std::vector<int> batch;
  batch.reserve(static_cast<size_t>(batch_size));
  int c_idx = 0;
  while (static_cast<int>(batch.size()) < batch_size) {
    const auto& members = by_class[classes[static_cast<size_t>(c_idx % n_cls)]];
    // two draws per visit so P(i) is non-empty whenever the class allows it
    batch.push_back(members[static_cast<size_t>(rng.uniform_int(static_cast<int>(members.size())))]);
    if (static_cast<int>(batch.size()) < batch_size)
      batch.push_back(
          members[static_cast<size_t>(rng.uniform_int(static_cast<int>(members.size())))]);
    ++c_idx;
  }
  return batch;
}

std::vector<TrainLogEntry> train_contrastive(IotBranch& iot, TextBranch& text,
                                             const std::vector<SensorWindow>& windows,
                                             const std::vector<int>& train_indices,
                                             const TrainConfig& cfg, const TrainOptions& opts) {
  cfg.validate();
  IOTZSL_REQUIRE(!train_indices.empty(), ErrKind::validation, "no training windows");
  if (!opts.learn_text_branch)
    IOTZSL_REQUIRE(opts.fixed_prototypes != nullptr, ErrKind::validation,
                   "frozen-prototype training needs fixed_prototypes");

  std::vector<int> pool_labels;
  pool_labels.reserve(train_indices.size());
  for (int idx : train_indices) pool_labels.push_back(windows[static_cast<size_t>(idx)].label);

  const int steps = cfg.steps_per_epoch > 0
                        ? cfg.steps_per_epoch
                        : static_cast<int>((train_indices.size() + cfg.batch_size - 1) /
                                           cfg.batch_size);
  Rng rng(cfg.seed ^ 0xc0417a57ULL);
  SgdMomentum opt(cfg.learning_rate, cfg.momentum);

  std::ofstream log;
  if (!opts.log_path.empty()) {
    log.open(opts.log_path, std::ios::trunc);
    IOTZSL_REQUIRE(log.good(), ErrKind::io, "cannot open train log: " + opts.log_path);
  }

  std::vector<TrainLogEntry> curve;
  const auto t_start = std::chrono::steady_clock::now();
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    double loss_sum = 0.0;
    for (int step = 0; step < steps; ++step) {
      const std::vector<int> batch =
          sample_contrastive_batch(train_indices, pool_labels, cfg.batch_size, rng);

      Tape t;
      ParamBag bag;

      // embeddings of the batch windows
      std::vector<Var> embed_rows;
      embed_rows.reserve(batch.size());
      for (int idx : batch)
        embed_rows.push_back(iot.embed_var(t, &bag, windows[static_cast<size_t>(idx)].data));
      Var e = t.concat_rows(embed_rows);

      // prototypes: recomputed from the learnables, or a frozen snapshot
      Var protos_all = opts.learn_text_branch
                           ? text.prototypes_var(t, &bag)
                           : t.constant(*opts.fixed_prototypes);

      // restrict the loss to the batch's distinct classes
      std::vector<int> batch_classes;
      for (int idx : batch) {
        const int c = windows[static_cast<size_t>(idx)].label;
        if (std::find(batch_classes.begin(), batch_classes.end(), c) == batch_classes.end())
          batch_classes.push_back(c);
      }
      std::sort(batch_classes.begin(), batch_classes.end());
      Mat select(static_cast<int>(batch_classes.size()), t.val(protos_all).rows(), 0.0);
      for (size_t r = 0; r < batch_classes.size(); ++r)
        select(static_cast<int>(r), batch_classes[r]) = 1.0;
      Var protos = t.matmul(t.constant(select), protos_all);

      std::vector<int> labels;
      labels.reserve(batch.size());
      for (int idx : batch) {
        const int c = windows[static_cast<size_t>(idx)].label;
        labels.push_back(static_cast<int>(
            std::find(batch_classes.begin(), batch_classes.end(), c) - batch_classes.begin()));
      }

      Var loss = supervised_contrastive_loss_var(t, e, protos, labels, cfg.temperature);
      const double loss_val = t.val(loss)(0, 0);
      if (!std::isfinite(loss_val)) {
        std::string diag = "contrastive loss diverged (non-finite) at epoch " +
                           std::to_string(epoch) + " step " + std::to_string(step) + "; batch:";
        for (int idx : batch) diag += " " + std::to_string(idx);
        throw Error(ErrKind::state, diag);
      }
      loss_sum += loss_val;

      t.backward(loss);
      opt.step(bag, t);
    }

    TrainLogEntry entry;
    entry.epoch = epoch;
    entry.mean_loss = loss_sum / steps;
    entry.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    curve.push_back(entry);
    if (log.is_open()) {
      nlohmann::json rec;
      rec["epoch"] = entry.epoch;
      rec["mean_loss"] = entry.mean_loss;
      rec["wall_seconds"] = entry.wall_seconds;
      log << rec.dump() << '\n';
    }
  }
  return curve;
}

}  // namespace iotzsl
