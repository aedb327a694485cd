#include "iotzsl/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <filesystem>
#include <fstream>
#include <thread>

#include "iotzsl/archive.hpp"

#include <json.hpp>

namespace fs = std::filesystem;
using nlohmann::json;

namespace iotzsl {

PreparedData run_prepare(const RunConfig& cfg, bool force_rebuild) {
  const DatasetSpec spec = cfg.dataset_spec();
  spec.validate();
  PreparedData data;

  const std::string cache = dataset_cache_path(spec);
  if (!force_rebuild && fs::exists(cache)) {
    data.store = WindowStore::load(cache);
  } else {
    data.store.spec = spec;
    const SyntheticConfig syn = cfg.synthetic_config();
    data.store.windows = window_all(load_raw_series(spec, &syn), spec);
    IOTZSL_REQUIRE(!data.store.windows.empty(), ErrKind::io,
                   "dataset '" + spec.name + "' produced no windows");
    data.store.save(cache);
  }

  data.folds = make_fold_splits(static_cast<int>(spec.class_list.size()), cfg.n_unseen(),
                                cfg.n_folds(), cfg.seed());
  cfg.write_snapshot();
  for (auto& fold : data.folds) {
    fold.subject_wise = cfg.subject_wise();
    partition_and_balance(fold, data.store.windows);
    fold.save((fs::path(cfg.run_dir()) / ("fold_" + std::to_string(fold.fold_index) + ".split"))
                  .string());
  }
  return data;
}

PreparedData load_prepared(const RunConfig& cfg) {
  const DatasetSpec spec = cfg.dataset_spec();
  const std::string cache = dataset_cache_path(spec);
  IOTZSL_REQUIRE(fs::exists(cache), ErrKind::state,
                 "no dataset cache at " + cache + "; run `prepare` first");
  PreparedData data;
  data.store = WindowStore::load(cache);
  for (int k = 0; k < cfg.n_folds(); ++k) {
    const auto path = fs::path(cfg.run_dir()) / ("fold_" + std::to_string(k) + ".split");
    IOTZSL_REQUIRE(fs::exists(path), ErrKind::state,
                   "missing fold split " + path.string() + "; run `prepare` first");
    data.folds.push_back(FoldSplit::load(path.string()));
  }
  return data;
}

std::string fold_dir(const RunConfig& cfg, int fold_index) {
  const auto dir = fs::path(cfg.run_dir()) / ("fold_" + std::to_string(fold_index));
  fs::create_directories(dir);
  return dir.string();
}

namespace {

void visit_model(ModelState& m, const nn::ParamVisitor& f) {
  m.iot.visit(f);
  m.text.visit(f);
  m.specialist.head.visit("specialist.head", f);
  m.theta.visit("theta", f);
}

Mat features_of(ModelState& model, const std::vector<SensorWindow>& windows,
                const std::vector<int>& indices) {
  Mat out;
  for (size_t i = 0; i < indices.size(); ++i) {
    const Mat h = model.iot.encoder.features(windows[static_cast<size_t>(indices[i])]);
    if (out.empty()) out = Mat(static_cast<int>(indices.size()), h.cols());
    for (int j = 0; j < h.cols(); ++j) out(static_cast<int>(i), j) = h(0, j);
  }
  return out;
}

std::vector<int> labels_of(const std::vector<SensorWindow>& windows,
                           const std::vector<int>& indices) {
  std::vector<int> out;
  out.reserve(indices.size());
  for (int idx : indices) out.push_back(windows[static_cast<size_t>(idx)].label);
  return out;
}

void train_specialist_head(ModelState& model, const std::vector<SensorWindow>& windows,
                           const FoldSplit& fold, const RunConfig& cfg) {
  Rng rng(cfg.seed() ^ 0x5bec1a115ULL);
  const Mat features = features_of(model, windows, fold.train_seen);
  const std::vector<int> labels = labels_of(windows, fold.train_seen);
  model.specialist.head = LinearSoftmax(features.cols(), fold.seen_classes, rng);
  nn::SgdMomentum opt(cfg.specialist_lr(), 0.9);
  for (int epoch = 0; epoch < cfg.specialist_epochs(); ++epoch)
    model.specialist.head.train_step(features, labels, opt);
}

void train_theta(ModelState& model, const std::vector<SensorWindow>& windows,
                 const FoldSplit& fold, const RunConfig& cfg) {
  Rng rng(cfg.seed() ^ 0x712e7aULL);
  const auto& first = windows[static_cast<size_t>(fold.train_seen.front())];
  const int x_dim = first.data.rows() * first.data.cols();
  Mat x(static_cast<int>(fold.train_seen.size()), x_dim);
  for (size_t i = 0; i < fold.train_seen.size(); ++i) {
    const Mat& w = windows[static_cast<size_t>(fold.train_seen[i])].data;
    for (int c = 0; c < w.rows(); ++c)
      for (int t = 0; t < w.cols(); ++t)
        x(static_cast<int>(i), c * w.cols() + t) = w(c, t);
  }
  const std::vector<int> labels = labels_of(windows, fold.train_seen);
  model.theta = LinearSoftmax(x_dim, fold.seen_classes, rng);
  nn::SgdMomentum opt(cfg.specialist_lr() * 0.1, 0.9);
  for (int epoch = 0; epoch < cfg.specialist_epochs(); ++epoch)
    model.theta.train_step(x, labels, opt);
}

}  // namespace

uint64_t ModelState::fingerprint() const {
  TensorArchive ar;
  auto* self = const_cast<ModelState*>(this);
  visit_model(*self, [&ar](const std::string& name, Mat& m) { ar.tensors[name] = m; });
  ar.tensors["prototypes"] = prototypes;
  return ar.fingerprint();
}

void ModelState::save(const std::string& path) const {
  TensorArchive ar;
  auto* self = const_cast<ModelState*>(this);
  visit_model(*self, [&ar](const std::string& name, Mat& m) { ar.tensors[name] = m; });
  ar.tensors["prototypes"] = prototypes;
  ar.tensors["text.aux"] = text.aux_embeddings;

  json meta;
  meta["class_names"] = class_names;
  meta["prompt_engineering"] = prompt_engineering;
  meta["specialist_classes"] = specialist.head.class_ids;
  meta["specialist_trained"] = specialist.head.trained;
  meta["theta_classes"] = theta.class_ids;
  meta["theta_trained"] = theta.trained;
  meta["architecture"] = iot_arch_name(iot.encoder.config().architecture);
  ar.blobs["meta"] = meta.dump();
  ar.blobs["config"] = config_snapshot;
  ar.save(path);
}

ModelState ModelState::load(const std::string& path, const RunConfig& cfg) {
  IOTZSL_REQUIRE(fs::exists(path), ErrKind::state,
                 "missing checkpoint " + path + "; run `train` first");
  TensorArchive ar = TensorArchive::load(path);
  const json meta = json::parse(ar.blob("meta"));

  ModelState m;
  m.class_names = meta.at("class_names").get<std::vector<std::string>>();
  m.prompt_engineering = meta.at("prompt_engineering").get<bool>();
  m.config_snapshot = ar.blob("config");

  Rng rng(cfg.seed());
  m.iot.encoder = IotEncoder(cfg.iot_encoder_config(), rng);
  auto encoder = cfg.make_text_encoder();
  m.iot.projector = Projector(cfg.iot_encoder_config().feature_dim, encoder->embed_dim(), rng);

  m.text.encoder = encoder;
  m.text.class_names = m.class_names;
  m.text.soft_prompt = SoftPromptState::init(cfg.soft_prompt_len(), encoder->token_width(), rng);
  m.text.cross_attn = CrossAttention::init(encoder->embed_dim(), rng);
  m.text.aux_embeddings = ar.tensor("text.aux");

  m.specialist.head.class_ids = meta.at("specialist_classes").get<std::vector<int>>();
  m.specialist.head.trained = meta.at("specialist_trained").get<bool>();
  m.theta.class_ids = meta.at("theta_classes").get<std::vector<int>>();
  m.theta.trained = meta.at("theta_trained").get<bool>();

  visit_model(m, [&ar](const std::string& name, Mat& dst) {
    const Mat& src = ar.tensor(name);
    IOTZSL_REQUIRE(dst.empty() || (dst.rows() == src.rows() && dst.cols() == src.cols()),
                   ErrKind::state, "checkpoint shape mismatch for " + name);
    dst = src;
  });
  m.prototypes = ar.tensor("prototypes");
  IOTZSL_REQUIRE(m.prototypes.cols() == encoder->embed_dim(), ErrKind::config,
                 "checkpoint prototype dimension does not match the configured encoder");
  return m;
}

ModelState run_train(const RunConfig& cfg, const PreparedData& data, const FoldSplit& fold,
                     bool prompt_engineering) {
  const DatasetSpec& spec = data.store.spec;
  Rng rng(cfg.seed());

  ModelState model;
  model.class_names = spec.class_list;
  model.prompt_engineering = prompt_engineering;
  model.config_snapshot = cfg.raw().dump();

  auto encoder = cfg.make_text_encoder();
  HardPromptSet prompts = generate_hard_prompts(spec.class_list, nullptr, cfg.prompt_file());
  model.text = TextBranch::create(encoder, spec.class_list, prompts, cfg.soft_prompt_len(), rng);

  IotEncoderConfig icfg = cfg.iot_encoder_config();
  model.iot.encoder = IotEncoder(icfg, rng);
  model.iot.projector = Projector(icfg.feature_dim, encoder->embed_dim(), rng);

  const std::string dir = fold_dir(cfg, fold.fold_index);
  TrainOptions opts;
  opts.log_path = (fs::path(dir) / "train.log").string();

  Mat template_protos;
  if (!prompt_engineering) {
    template_protos = template_prototypes(*encoder, spec.class_list);
    opts.learn_text_branch = false;
    opts.fixed_prototypes = &template_protos;
  }
  train_contrastive(model.iot, model.text, data.store.windows, fold.train_seen,
                    cfg.train_config(), opts);

  // publish the frozen prototype snapshot
  model.prototypes = prompt_engineering ? model.text.prototypes() : template_protos;

  train_specialist_head(model, data.store.windows, fold, cfg);
  train_theta(model, data.store.windows, fold, cfg);

  model.save((fs::path(dir) / "model.ckpt").string());
  return model;
}

std::vector<SensorWindow> run_augment(const RunConfig& cfg, const PreparedData& data,
                                      const FoldSplit& fold, ModelState& model) {
  GanConfig gcfg = cfg.gan_config();
  TrainedGan gan =
      train_gan(data.store.windows, fold.train_seen, model.prototypes, model.theta, gcfg);

  const int n_aug = gcfg.n_aug_per_class > 0
                        ? gcfg.n_aug_per_class
                        : default_n_aug(data.store.windows, fold.train_seen);
  const DatasetSpec& spec = data.store.spec;
  std::vector<SensorWindow> augmented =
      synthesize_unseen(gan.generator, model.prototypes, fold.unseen_classes, n_aug,
                        spec.channels, spec.window_len(), spec.modality, cfg.seed() ^ 0xa06ULL);

  const std::string dir = fold_dir(cfg, fold.fold_index);
  if (!augmented.empty()) {
    WindowStore aug_store;
    aug_store.spec = spec;
    aug_store.windows = augmented;
    aug_store.save((fs::path(dir) / "aug.bin").string());
  }

  finetune_with_augmentation(model.iot, model.text, data.store.windows, fold.train_seen,
                             augmented, cfg.finetune_config(),
                             (fs::path(dir) / "finetune.log").string());

  // the edge specialist runs on the final extractor
  train_specialist_head(model, data.store.windows, fold, cfg);
  model.save((fs::path(dir) / "model.ckpt").string());
  return augmented;
}

ClusterStore run_calibrate(const RunConfig& cfg, const PreparedData& data, const FoldSplit& fold,
                           const ModelState& model) {
  auto& m = const_cast<ModelState&>(model);
  const Mat train_e = m.iot.embed_all(data.store.windows, fold.train_seen);
  ClusterStore store =
      build_clusters(train_e, labels_of(data.store.windows, fold.train_seen),
                     cfg.detector_k_fraction());
  const Mat val_e = m.iot.embed_all(data.store.windows, fold.val_seen);
  calibrate(store, val_e, labels_of(data.store.windows, fold.val_seen),
            cfg.detector_retention());
  store.model_fingerprint = model.fingerprint();
  store.save((fs::path(fold_dir(cfg, fold.fold_index)) / "detector.bin").string());
  return store;
}

FoldReport run_eval(const RunConfig& cfg, const PreparedData& data, const FoldSplit& fold,
                    ModelState& model, const ClusterStore& detector, AblationFlags flags) {
  std::vector<int> test_indices = fold.test_seen;
  test_indices.insert(test_indices.end(), fold.test_unseen.begin(), fold.test_unseen.end());
  std::vector<bool> true_seen(fold.test_seen.size(), true);
  true_seen.insert(true_seen.end(), fold.test_unseen.size(), false);

  GzslSystem sys;
  sys.iot = &model.iot;
  sys.specialist = &model.specialist;
  sys.detector = &detector;
  sys.prototypes = model.prototypes;
  sys.unseen_classes = fold.unseen_classes;

  std::ofstream records(
      (fs::path(fold_dir(cfg, fold.fold_index)) / "predictions.jsonl").string(),
      std::ios::trunc);

  std::vector<int> predictions, truth;
  std::vector<Detection> detections;
  long cloud = 0;
  for (size_t i = 0; i < test_indices.size(); ++i) {
    const int idx = test_indices[i];
    const auto& w = data.store.windows[static_cast<size_t>(idx)];
    int label = -1;
    std::string route;
    if (flags.open_set) {
      const Decision d = classify(w, sys);
      label = d.label;
      route = d.route == Route::edge_seen ? "edge_seen" : "cloud_unseen";
      detections.push_back(d.route == Route::edge_seen ? Detection::seen : Detection::unseen);
      if (d.route == Route::cloud_unseen) ++cloud;
    } else {
      const Mat e = model.iot.embed(w);
      label = match_all_prototypes(e, model.prototypes);
      route = "direct_match";
    }
    predictions.push_back(label);
    truth.push_back(w.label);
    json rec;
    rec["window"] = idx;
    rec["route"] = route;
    rec["predicted"] = label;
    rec["true"] = w.label;
    records << rec.dump() << '\n';
  }

  FoldReport report;
  report.fold_index = fold.fold_index;
  report.flags = flags;
  report.gzsl = gzsl_metrics(predictions, truth, fold.seen_classes, fold.unseen_classes);
  if (flags.open_set) {
    report.detection = detection_metrics(detections, true_seen);
    report.cloud_fraction = static_cast<double>(cloud) / static_cast<double>(test_indices.size());
  }
  return report;
}

FoldReport run_fold_pipeline(const RunConfig& cfg, const PreparedData& data,
                             const FoldSplit& fold, AblationFlags flags) {
  ModelState model = run_train(cfg, data, fold, flags.prompt_engineering);
  if (flags.data_augmentation) run_augment(cfg, data, fold, model);
  ClusterStore detector = run_calibrate(cfg, data, fold, model);
  return run_eval(cfg, data, fold, model, detector, flags);
}

namespace {

// Fold-level parallelism, opt-in via run.workers. Fold pipelines are
// independent (separate fold directories, no shared mutable state).
void over_folds(int workers, size_t n, const std::function<void(size_t)>& body) {
  if (workers <= 1 || n <= 1) {
    for (size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::atomic<size_t> next{0};
  std::vector<std::exception_ptr> errors(n);
  std::vector<std::thread> pool;
  const int n_workers = std::min<int>(workers, static_cast<int>(n));
  for (int w = 0; w < n_workers; ++w)
    pool.emplace_back([&] {
      size_t i;
      while ((i = next.fetch_add(1)) < n) {
        try {
          body(i);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      }
    });
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace

MetricsReport run_eval_all(const RunConfig& cfg, const PreparedData& data, AblationFlags flags) {
  std::vector<FoldReport> reports(data.folds.size());
  over_folds(cfg.workers(), data.folds.size(), [&](size_t i) {
    reports[i] = run_fold_pipeline(cfg, data, data.folds[i], flags);
  });
  MetricsReport report = kfold_aggregate(reports);
  write_metrics_files(report, (fs::path(cfg.run_dir()) / "metrics.json").string(),
                      (fs::path(cfg.run_dir()) / "metrics.txt").string(),
                      data.store.spec.name);
  return report;
}

std::vector<MetricsReport> run_ablation_matrix(const RunConfig& cfg, const PreparedData& data) {
  AblationFlags no_pe;
  no_pe.prompt_engineering = false;
  AblationFlags no_os;
  no_os.open_set = false;
  AblationFlags no_da;
  no_da.data_augmentation = false;
  AblationFlags full;

  std::vector<FoldReport> rows_no_pe(data.folds.size()), rows_no_os(data.folds.size()),
      rows_no_da(data.folds.size()), rows_full(data.folds.size());
  over_folds(cfg.workers(), data.folds.size(), [&](size_t i) {
    const FoldSplit& fold = data.folds[i];
    // full pipeline; the pre-augmentation copy doubles as the no-DA variant
    ModelState model = run_train(cfg, data, fold, true);
    ModelState model_no_da = model;
    run_augment(cfg, data, fold, model);
    ClusterStore det_full = run_calibrate(cfg, data, fold, model);
    rows_full[i] = run_eval(cfg, data, fold, model, det_full, full);
    rows_no_os[i] = run_eval(cfg, data, fold, model, det_full, no_os);

    ClusterStore det_no_da = run_calibrate(cfg, data, fold, model_no_da);
    rows_no_da[i] = run_eval(cfg, data, fold, model_no_da, det_no_da, no_da);

    // the no-PE row trains its own model against template prototypes
    ModelState model_no_pe = run_train(cfg, data, fold, false);
    run_augment(cfg, data, fold, model_no_pe);
    ClusterStore det_no_pe = run_calibrate(cfg, data, fold, model_no_pe);
    rows_no_pe[i] = run_eval(cfg, data, fold, model_no_pe, det_no_pe, no_pe);
  });

  std::vector<MetricsReport> out;
  out.push_back(kfold_aggregate(rows_no_pe));
  out.push_back(kfold_aggregate(rows_no_os));
  out.push_back(kfold_aggregate(rows_no_da));
  out.push_back(kfold_aggregate(rows_full));

  json ablation = json::array();
  const char* names[4] = {"no_prompt_engineering", "no_open_set", "no_data_augmentation",
                          "full"};
  for (size_t i = 0; i < out.size(); ++i) {
    json row;
    row["variant"] = names[i];
    row["acc_seen"] = out[i].aggregate.at("acc_seen").mean;
    row["acc_unseen"] = out[i].aggregate.at("acc_unseen").mean;
    row["acc_harmonic"] = out[i].aggregate.at("acc_harmonic").mean;
    row["acc_harmonic_variance"] = out[i].aggregate.at("acc_harmonic").variance;
    ablation.push_back(row);
  }
  std::ofstream f((fs::path(cfg.run_dir()) / "ablation.json").string(), std::ios::trunc);
  f << ablation.dump(2) << '\n';
  return out;
}

BaselineReport run_baselines(const RunConfig& cfg, const PreparedData& data) {
  BaselineReport report;
  for (const auto& fold : data.folds) {
    ModelState model = run_train(cfg, data, fold, true);
    run_augment(cfg, data, fold, model);
    ClusterStore detector = run_calibrate(cfg, data, fold, model);

    std::vector<int> test_indices = fold.test_seen;
    test_indices.insert(test_indices.end(), fold.test_unseen.begin(), fold.test_unseen.end());
    std::vector<bool> true_seen(fold.test_seen.size(), true);
    true_seen.insert(true_seen.end(), fold.test_unseen.size(), false);

    // main method
    {
      std::vector<Detection> pred;
      for (int idx : test_indices)
        pred.push_back(detect(model.iot.embed(data.store.windows[static_cast<size_t>(idx)]),
                              detector));
      report.per_fold["ours"].push_back(detection_metrics(pred, true_seen));
    }

    // MSP on the specialist's max softmax, keep-high threshold at the same retention
    {
      std::vector<double> val_scores;
      for (int idx : fold.val_seen)
        val_scores.push_back(model.specialist.max_softmax(
            model.iot.encoder, data.store.windows[static_cast<size_t>(idx)]));
      const double thr = keep_high_threshold(val_scores, cfg.detector_retention());
      std::vector<Detection> pred;
      for (int idx : test_indices)
        pred.push_back(baseline_msp(
            model.specialist.max_softmax(model.iot.encoder,
                                         data.store.windows[static_cast<size_t>(idx)]),
            thr));
      report.per_fold["msp"].push_back(detection_metrics(pred, true_seen));
    }

    // KNN on a separate noise-contrastive embedding model
    {
      KnnBaselineConfig kcfg;
      kcfg.train = cfg.train_config();
      kcfg.train.epochs = cfg.knn_epochs();
      kcfg.noise_std = cfg.knn_noise_std();
      kcfg.k_fraction = cfg.detector_k_fraction();
      kcfg.retention = cfg.detector_retention();
      KnnBaselineState knn =
          train_knn_baseline(data.store.windows, fold.train_seen, fold.val_seen,
                             cfg.iot_encoder_config(), model.text.encoder->embed_dim(), kcfg);
      std::vector<Detection> pred;
      for (int idx : test_indices)
        pred.push_back(
            baseline_knn(knn.model.embed(data.store.windows[static_cast<size_t>(idx)]), knn));
      report.per_fold["knn"].push_back(detection_metrics(pred, true_seen));
    }

    // MCM: main embeddings against fixed-template seen prototypes
    {
      McmBaselineState mcm;
      const Mat all_templates = template_prototypes(*model.text.encoder, model.class_names);
      mcm.seen_prototypes = Mat(static_cast<int>(fold.seen_classes.size()), all_templates.cols());
      for (size_t i = 0; i < fold.seen_classes.size(); ++i)
        for (int j = 0; j < all_templates.cols(); ++j)
          mcm.seen_prototypes(static_cast<int>(i), j) = all_templates(fold.seen_classes[i], j);
      mcm.temperature = cfg.mcm_temperature();
      std::vector<double> val_scores;
      for (int idx : fold.val_seen)
        val_scores.push_back(
            mcm_score(model.iot.embed(data.store.windows[static_cast<size_t>(idx)]), mcm));
      mcm.threshold = keep_high_threshold(val_scores, cfg.detector_retention());
      std::vector<Detection> pred;
      for (int idx : test_indices)
        pred.push_back(
            baseline_mcm(model.iot.embed(data.store.windows[static_cast<size_t>(idx)]), mcm));
      report.per_fold["mcm"].push_back(detection_metrics(pred, true_seen));
    }
  }

  json out = json::object();
  for (const auto& [method, folds] : report.per_fold) {
    AggregateStat stat;
    for (const auto& m : folds) stat.mean += m.f1;
    stat.mean /= folds.size();
    for (const auto& m : folds) stat.variance += (m.f1 - stat.mean) * (m.f1 - stat.mean);
    stat.variance /= folds.size();
    report.f1_aggregate[method] = stat;
    json rows = json::array();
    for (const auto& m : folds)
      rows.push_back({{"precision", m.precision}, {"recall", m.recall}, {"f1", m.f1}});
    out[method] = {{"folds", rows}, {"f1_mean", stat.mean}, {"f1_variance", stat.variance}};
  }
  std::ofstream f((fs::path(cfg.run_dir()) / "baselines.json").string(), std::ios::trunc);
  f << out.dump(2) << '\n';
  return report;
}

void run_dump_embeddings(const RunConfig& cfg, const PreparedData& data, const FoldSplit& fold,
                         ModelState& model, const std::string& out_path) {
  std::ofstream f(out_path, std::ios::trunc);
  IOTZSL_REQUIRE(f.good(), ErrKind::io, "cannot write embedding dump: " + out_path);
  f << "kind,id,label,values\n";
  auto write_row = [&f](const char* kind, int id, int label, const Mat& e) {
    f << kind << ',' << id << ',' << label << ',';
    for (int j = 0; j < e.cols(); ++j) f << (j ? ";" : "") << e(0, j);
    f << '\n';
  };
  std::vector<int> test_indices = fold.test_seen;
  test_indices.insert(test_indices.end(), fold.test_unseen.begin(), fold.test_unseen.end());
  for (int idx : test_indices) {
    const auto& w = data.store.windows[static_cast<size_t>(idx)];
    write_row("embedding", idx, w.label, model.iot.embed(w));
  }
  for (int c = 0; c < model.prototypes.rows(); ++c) {
    Mat row(1, model.prototypes.cols());
    for (int j = 0; j < row.cols(); ++j) row(0, j) = model.prototypes(c, j);
    write_row("prototype", c, c, row);
  }
}

void write_metrics_files(const MetricsReport& report, const std::string& json_path,
                         const std::string& txt_path, const std::string& dataset_name) {
  json j;
  j["folds"] = json::array();
  for (const auto& f : report.folds) {
    json row;
    row["fold"] = f.fold_index;
    row["flags"] = f.flags.tag();
    row["detection"] = {{"precision", f.detection.precision},
                        {"recall", f.detection.recall},
                        {"f1", f.detection.f1}};
    row["gzsl"] = {{"acc_seen", f.gzsl.acc_seen},
                   {"acc_unseen", f.gzsl.acc_unseen},
                   {"acc_harmonic", f.gzsl.acc_harmonic}};
    row["cloud_fraction"] = f.cloud_fraction;
    j["folds"].push_back(row);
  }
  j["aggregate"] = json::object();
  for (const auto& [name, stat] : report.aggregate)
    j["aggregate"][name] = {{"mean", stat.mean}, {"variance", stat.variance}};

  std::ofstream jf(json_path, std::ios::trunc);
  IOTZSL_REQUIRE(jf.good(), ErrKind::io, "cannot write " + json_path);
  jf << j.dump(2) << '\n';

  std::ofstream tf(txt_path, std::ios::trunc);
  IOTZSL_REQUIRE(tf.good(), ErrKind::io, "cannot write " + txt_path);
  char line[256];
  tf << "Dataset: " << dataset_name << "\n\n";
  tf << "Open-set detection (weighted, mean over folds)\n";
  std::snprintf(line, sizeof(line), "  %-10s %-10s %-10s\n", "Precision", "Recall", "F1");
  tf << line;
  std::snprintf(line, sizeof(line), "  %-10.4f %-10.4f %-10.4f\n",
                report.aggregate.at("detection_precision").mean,
                report.aggregate.at("detection_recall").mean,
                report.aggregate.at("detection_f1").mean);
  tf << line;
  tf << "\nGeneralized zero-shot classification (mean +/- variance over folds)\n";
  std::snprintf(line, sizeof(line), "  %-12s %-12s %-12s\n", "ACC_seen", "ACC_unseen",
                "ACC_harm");
  tf << line;
  std::snprintf(line, sizeof(line), "  %-12.4f %-12.4f %-12.4f\n",
                report.aggregate.at("acc_seen").mean, report.aggregate.at("acc_unseen").mean,
                report.aggregate.at("acc_harmonic").mean);
  tf << line;
  std::snprintf(line, sizeof(line), "  (var) %-6.4f %-12.4f %-12.4f\n",
                report.aggregate.at("acc_seen").variance,
                report.aggregate.at("acc_unseen").variance,
                report.aggregate.at("acc_harmonic").variance);
  tf << line;
  tf << "\nPer fold\n";
  for (const auto& f : report.folds) {
    std::snprintf(line, sizeof(line),
                  "  fold %d [%s]  F1 %.4f  ACC_S %.4f  ACC_U %.4f  ACC_H %.4f  cloud %.3f\n",
                  f.fold_index, f.flags.tag().c_str(), f.detection.f1, f.gzsl.acc_seen,
                  f.gzsl.acc_unseen, f.gzsl.acc_harmonic, f.cloud_fraction);
    tf << line;
  }
}

}  // namespace iotzsl
