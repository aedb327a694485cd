#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "iotzsl/mat.hpp"

namespace iotzsl {

enum class Modality { imu, mmwave, wifi };

const char* modality_name(Modality m);
Modality modality_from_name(const std::string& s);

// One fixed-length multi-channel sensor snippet; the atom of training and
// evaluation. `label` indexes the owning DatasetSpec's class_list.
struct SensorWindow {
  Mat data;  // [channels x timesteps]
  int label = -1;
  Modality modality = Modality::imu;
  std::string subject_id;
};

struct DatasetSpec {
  std::string name;
  std::vector<std::string> class_list;
  double sample_rate = 0.0;   // Hz (frames/s for frame-based modalities)
  double window_seconds = 0.0;
  double overlap_fraction = 0.0;
  Modality modality = Modality::imu;
  int channels = 0;           // fixed layout after loader flattening
  std::string root_path;

  int window_len() const;
  void validate() const;
};

// Stride implied by a window length and overlap fraction.
int window_stride(int window_len, double overlap_fraction);

// Number of fully contained windows: floor((T - window_len)/stride) + 1.
long window_count(long series_len, int window_len, int stride);

// Cuts a [channels x T] series into fully contained windows. A series shorter
// than one window yields an empty list.
std::vector<SensorWindow> window_series(const Mat& series, int window_len,
                                        double overlap_fraction, int label,
                                        Modality modality,
                                        const std::string& subject_id = "");

// One K-fold assignment of classes to seen/unseen plus the 8:1:1 partition of
// seen-class windows and the balanced test set.
struct FoldSplit {
  int fold_index = 0;
  std::vector<int> seen_classes;
  std::vector<int> unseen_classes;
  std::vector<int> train_seen;
  std::vector<int> val_seen;
  std::vector<int> test_seen;
  std::vector<int> test_unseen;
  uint64_t rng_seed = 0;
  bool subject_wise = false;

  bool is_seen_class(int label) const;
  void save(const std::string& path) const;
  static FoldSplit load(const std::string& path);
};

// K folds, each drawing n_unseen unseen classes uniformly without replacement
// (draws are independent across folds, all fixed by `seed`).
std::vector<FoldSplit> make_fold_splits(int n_classes, int n_unseen, int K, uint64_t seed);

// Fills the index lists of `fold`: seen-class windows split 8:1:1 per class by
// uniform shuffle under fold.rng_seed (or grouped by subject when
// fold.subject_wise), unseen-class windows pooled, and the test set balanced
// by subsampling the larger side down to the smaller.
void partition_and_balance(FoldSplit& fold, const std::vector<SensorWindow>& windows);

// Loader output atom: one contiguous labeled recording.
struct LabeledSeries {
  Mat series;  // [channels x T]
  int label = -1;
  std::string subject_id;
};

// Windowed dataset with its spec; cached to <root>/<name>/cache/windows.bin.
struct WindowStore {
  DatasetSpec spec;
  std::vector<SensorWindow> windows;

  void save(const std::string& path) const;
  static WindowStore load(const std::string& path);
};

// Repairs NaN runs by per-channel linear interpolation (nearest valid value
// at the edges). Returns false when more than max_missing_fraction of the
// window's values are missing, or a channel has no valid sample at all.
bool repair_missing(Mat& window, double max_missing_fraction = 0.2);

// Windows every series, applying the missing-value policy per window.
std::vector<SensorWindow> window_all(const std::vector<LabeledSeries>& series,
                                     const DatasetSpec& spec);

std::string dataset_cache_path(const DatasetSpec& spec);

// Loads the window cache for `spec`, building it from raw files on first use.
WindowStore load_or_build_windows(const DatasetSpec& spec, bool force_rebuild = false);

}  // namespace iotzsl
