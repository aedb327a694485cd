#include "iotzsl/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <set>

#include "iotzsl/openset.hpp"

namespace iotzsl {

std::string AblationFlags::tag() const {
  std::string s;
  s += prompt_engineering ? "pe" : "--";
  s += open_set ? "+os" : "+--";
  s += data_augmentation ? "+da" : "+--";
  return s;
}

DetectionMetrics detection_metrics(const std::vector<Detection>& predictions,
                                   const std::vector<bool>& true_seen) {
  IOTZSL_REQUIRE(!predictions.empty(), ErrKind::validation, "detection_metrics: empty input");
  IOTZSL_REQUIRE(predictions.size() == true_seen.size(), ErrKind::validation,
                 "detection_metrics: size mismatch");
  // confusion counts with "seen" as class 0 and "unseen" as class 1
  long support[2] = {0, 0};
  long tp[2] = {0, 0}, fp[2] = {0, 0}, fn[2] = {0, 0};
  for (size_t i = 0; i < predictions.size(); ++i) {
    const int truth = true_seen[i] ? 0 : 1;
    const int pred = predictions[i] == Detection::seen ? 0 : 1;
    ++support[truth];
    if (pred == truth) {
      ++tp[truth];
    } else {
      ++fn[truth];
      ++fp[pred];
    }
  }
  DetectionMetrics m;
  const double total = static_cast<double>(predictions.size());
  for (int c = 0; c < 2; ++c) {
    const double w = support[c] / total;
    const double p = tp[c] + fp[c] == 0 ? 0.0 : static_cast<double>(tp[c]) / (tp[c] + fp[c]);
    const double r = support[c] == 0 ? 0.0 : static_cast<double>(tp[c]) / support[c];
    const double f1 = p + r == 0.0 ? 0.0 : 2.0 * p * r / (p + r);
    m.precision += w * p;
    m.recall += w * r;
    m.f1 += w * f1;
  }
  return m;
}

double harmonic_mean_accuracy(double acc_seen, double acc_unseen) {
  if (acc_seen + acc_unseen == 0.0) return 0.0;
  return 2.0 * acc_seen * acc_unseen / (acc_seen + acc_unseen);
}

GzslMetrics gzsl_metrics(const std::vector<int>& predictions, const std::vector<int>& truth,
                         const std::vector<int>& seen_classes,
                         const std::vector<int>& unseen_classes) {
  IOTZSL_REQUIRE(predictions.size() == truth.size() && !truth.empty(), ErrKind::validation,
                 "gzsl_metrics: bad inputs");
  std::map<int, long> correct, total;
  for (size_t i = 0; i < truth.size(); ++i) {
    ++total[truth[i]];
    if (predictions[i] == truth[i]) ++correct[truth[i]];
  }
  auto group_accuracy = [&](const std::vector<int>& classes) {
    double num = 0.0, den = 0.0;
    for (int c : classes) {
      auto it = total.find(c);
      if (it == total.end()) {
        warn("gzsl_metrics: class " + std::to_string(c) +
             " has no test samples; excluded from the weighting");
        continue;
      }
      num += static_cast<double>(correct[c]);
      den += static_cast<double>(it->second);
    }
    return den == 0.0 ? 0.0 : num / den;
  };
  GzslMetrics m;
  m.acc_seen = group_accuracy(seen_classes);
  m.acc_unseen = group_accuracy(unseen_classes);
  m.acc_harmonic = harmonic_mean_accuracy(m.acc_seen, m.acc_unseen);
  return m;
}

MetricsReport kfold_aggregate(const std::vector<FoldReport>& folds) {
  IOTZSL_REQUIRE(!folds.empty(), ErrKind::validation, "kfold_aggregate: no fold reports");
  MetricsReport report;
  report.folds = folds;
  auto stat_of = [&](const std::function<double(const FoldReport&)>& get) {
    AggregateStat s;
    for (const auto& f : folds) s.mean += get(f);
    s.mean /= folds.size();
    for (const auto& f : folds) {
      const double d = get(f) - s.mean;
      s.variance += d * d;
    }
    s.variance /= folds.size();  // population variance over the splits
    return s;
  };
  report.aggregate["detection_precision"] = stat_of([](const FoldReport& f) { return f.detection.precision; });
  report.aggregate["detection_recall"] = stat_of([](const FoldReport& f) { return f.detection.recall; });
  report.aggregate["detection_f1"] = stat_of([](const FoldReport& f) { return f.detection.f1; });
  report.aggregate["acc_seen"] = stat_of([](const FoldReport& f) { return f.gzsl.acc_seen; });
  report.aggregate["acc_unseen"] = stat_of([](const FoldReport& f) { return f.gzsl.acc_unseen; });
  // mean of per-fold harmonic means, not the harmonic mean of aggregates
  report.aggregate["acc_harmonic"] = stat_of([](const FoldReport& f) { return f.gzsl.acc_harmonic; });
  report.aggregate["cloud_fraction"] = stat_of([](const FoldReport& f) { return f.cloud_fraction; });
  return report;
}

double keep_high_threshold(std::vector<double> scores, double p) {
  IOTZSL_REQUIRE(!scores.empty(), ErrKind::validation, "keep_high_threshold: empty scores");
  IOTZSL_REQUIRE(p > 0.0 && p <= 1.0, ErrKind::validation, "keep_high_threshold: bad p");
  std::sort(scores.begin(), scores.end());
  const auto n = scores.size();
  size_t keep = static_cast<size_t>(std::ceil(p * static_cast<double>(n)));
  keep = std::max<size_t>(1, std::min(keep, n));
  return scores[n - keep];  // at least `keep` scores are >= this value
}

Detection baseline_msp(double max_softmax_prob, double threshold) {
  return max_softmax_prob >= threshold ? Detection::seen : Detection::unseen;
}

double knn_baseline_score(const Mat& e_row, const KnnBaselineState& state) {
  ClusterStore::Cluster pooled;
  pooled.class_id = 0;
  pooled.members = state.train_embeddings;
  pooled.k = state.k;
  return kth_distance(e_row, pooled);
}

Detection baseline_knn(const Mat& e_row, const KnnBaselineState& state) {
  IOTZSL_REQUIRE(state.threshold >= 0.0, ErrKind::state, "knn baseline is uncalibrated");
  return knn_baseline_score(e_row, state) > state.threshold ? Detection::unseen
                                                            : Detection::seen;
}

KnnBaselineState train_knn_baseline(const std::vector<SensorWindow>& windows,
                                    const std::vector<int>& train_indices,
                                    const std::vector<int>& val_indices,
                                    const IotEncoderConfig& encoder_cfg, int embed_dim,
                                    const KnnBaselineConfig& cfg) {
  IOTZSL_REQUIRE(!train_indices.empty() && !val_indices.empty(), ErrKind::validation,
                 "knn baseline needs train and validation windows");
  Rng rng(cfg.train.seed ^ 0x0badd1ceULL);
  KnnBaselineState state;
  state.model.encoder = IotEncoder(encoder_cfg, rng);
  state.model.projector = Projector(encoder_cfg.feature_dim, embed_dim, rng);

  // contrastive training where positives are noise-augmented copies
  nn::SgdMomentum opt(cfg.train.learning_rate, cfg.train.momentum);
  Rng noise_rng(cfg.train.seed ^ 0xadd17ULL);
  const int steps = std::max(1, static_cast<int>(train_indices.size()) / cfg.train.batch_size);
  const int half_batch = std::max(2, cfg.train.batch_size / 2);
  for (int epoch = 0; epoch < cfg.train.epochs; ++epoch) {
    for (int step = 0; step < steps; ++step) {
      nn::Tape t;
      nn::ParamBag bag;
      std::vector<nn::Var> rows;
      std::vector<int> labels;
      for (int i = 0; i < half_batch; ++i) {
        const int idx = train_indices[static_cast<size_t>(
            noise_rng.uniform_int(static_cast<int>(train_indices.size())))];
        const auto& w = windows[static_cast<size_t>(idx)];
        rows.push_back(state.model.embed_var(t, &bag, w.data));
        labels.push_back(w.label);
        Mat noisy = w.data;
        for (size_t k = 0; k < noisy.size(); ++k) noisy[k] += cfg.noise_std * noise_rng.gaussian();
        rows.push_back(state.model.embed_var(t, &bag, noisy));
        labels.push_back(w.label);
      }
      nn::Var e = t.concat_rows(rows);
      nn::Var loss = embedding_supcon_loss_var(t, e, labels, cfg.train.temperature);
      IOTZSL_REQUIRE(std::isfinite(t.val(loss)(0, 0)), ErrKind::state,
                     "knn baseline training diverged");
      t.backward(loss);
      opt.step(bag, t);
    }
  }

  state.train_embeddings = state.model.embed_all(windows, train_indices);
  state.k = std::max(1, static_cast<int>(std::lround(cfg.k_fraction *
                                                     static_cast<double>(train_indices.size()))));

  std::vector<double> val_scores;
  for (int idx : val_indices) {
    const Mat e = state.model.embed(windows[static_cast<size_t>(idx)]);
    val_scores.push_back(knn_baseline_score(e, state));
  }
  state.threshold = empirical_quantile_ceiling(val_scores, cfg.retention);
  return state;
}

double mcm_score(const Mat& e_row, const McmBaselineState& state) {
  IOTZSL_REQUIRE(state.seen_prototypes.rows() > 0, ErrKind::state, "mcm baseline: no prototypes");
  const int n = state.seen_prototypes.rows();
  std::vector<double> sims(static_cast<size_t>(n));
  for (int c = 0; c < n; ++c) {
    double s = 0.0;
    for (int j = 0; j < e_row.cols(); ++j) s += e_row(0, j) * state.seen_prototypes(c, j);
    sims[static_cast<size_t>(c)] = s / state.temperature;
  }
  const double mx = *std::max_element(sims.begin(), sims.end());
  double z = 0.0;
  for (double s : sims) z += std::exp(s - mx);
  return 1.0 / z;  // softmax probability of the max-similarity class
}

Detection baseline_mcm(const Mat& e_row, const McmBaselineState& state) {
  IOTZSL_REQUIRE(state.threshold >= 0.0, ErrKind::state, "mcm baseline is uncalibrated");
  return mcm_score(e_row, state) >= state.threshold ? Detection::seen : Detection::unseen;
}

}  // namespace iotzsl
