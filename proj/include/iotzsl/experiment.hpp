#pragma once

#include <map>
#include <string>
#include <vector>

#include "iotzsl/config.hpp"
#include "iotzsl/evaluation.hpp"
#include "iotzsl/gan.hpp"
#include "iotzsl/openset.hpp"

namespace iotzsl {

struct PreparedData {
  WindowStore store;
  std::vector<FoldSplit> folds;
};

// Ingest + window + split; writes the dataset cache and fold files.
PreparedData run_prepare(const RunConfig& cfg, bool force_rebuild = false);

// Loads prepared data from the cache and fold files (prepare must have run).
PreparedData load_prepared(const RunConfig& cfg);

// Everything trainable plus the published prototype snapshot for one fold.
struct ModelState {
  std::vector<std::string> class_names;
  IotBranch iot;
  TextBranch text;
  Specialist specialist;
  LinearSoftmax theta;  // raw-window seen-class classifier scoring the GAN
  Mat prototypes;       // frozen unit rows, row index = class id
  bool prompt_engineering = true;
  std::string config_snapshot;  // resolved config JSON the model was built with

  uint64_t fingerprint() const;
  void save(const std::string& path) const;
  static ModelState load(const std::string& path, const RunConfig& cfg);
};

std::string fold_dir(const RunConfig& cfg, int fold_index);

// Contrastive training for one fold (plus the specialist head on the frozen
// extractor). With prompt_engineering=false the prototypes are the fixed
// template and only mu/g train. Writes fold_<k>/model.ckpt and train.log.
ModelState run_train(const RunConfig& cfg, const PreparedData& data, const FoldSplit& fold,
                     bool prompt_engineering = true);

// GAN training, unseen-class synthesis, fine-tuning, specialist refresh.
// Writes aug.bin and updates model.ckpt. Returns the synthesized windows.
std::vector<SensorWindow> run_augment(const RunConfig& cfg, const PreparedData& data,
                                      const FoldSplit& fold, ModelState& model);

// Builds and calibrates the per-class detector on the current model; writes
// detector.bin stamped with the model fingerprint.
ClusterStore run_calibrate(const RunConfig& cfg, const PreparedData& data, const FoldSplit& fold,
                           const ModelState& model);

// Balanced-test-set evaluation; honors flags.open_set. Writes per-sample
// records to fold_<k>/predictions.jsonl.
FoldReport run_eval(const RunConfig& cfg, const PreparedData& data, const FoldSplit& fold,
                    ModelState& model, const ClusterStore& detector, AblationFlags flags);

// Full pipeline for one fold under the given ablation flags.
FoldReport run_fold_pipeline(const RunConfig& cfg, const PreparedData& data,
                             const FoldSplit& fold, AblationFlags flags);

// All folds with the given flags; writes metrics.json / metrics.txt.
MetricsReport run_eval_all(const RunConfig& cfg, const PreparedData& data,
                           AblationFlags flags = {});

// The four-row ablation matrix, reusing shared stages within each fold.
// Row order: (-PE), (-OS), (-DA), full.
std::vector<MetricsReport> run_ablation_matrix(const RunConfig& cfg, const PreparedData& data);

struct BaselineReport {
  // method -> per-fold detection metrics
  std::map<std::string, std::vector<DetectionMetrics>> per_fold;
  std::map<std::string, AggregateStat> f1_aggregate;
};

// MSP / KNN / MCM detection baselines next to the main detector.
BaselineReport run_baselines(const RunConfig& cfg, const PreparedData& data);

// Test-set embeddings + prototypes for external visualization.
void run_dump_embeddings(const RunConfig& cfg, const PreparedData& data, const FoldSplit& fold,
                         ModelState& model, const std::string& out_path);

void write_metrics_files(const MetricsReport& report, const std::string& json_path,
                         const std::string& txt_path, const std::string& dataset_name);

}  // namespace iotzsl
