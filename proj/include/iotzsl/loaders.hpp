#pragma once

#include <cstdint>

#include "iotzsl/dataset.hpp"

namespace iotzsl {

// Deterministic synthetic corpus: every (class, channel) pair gets its own
// sinusoid mixture so classes are separable but share a common signal family.
struct SyntheticConfig {
  int n_subjects = 4;
  int series_per_subject = 2;
  double series_seconds = 16.0;
  double noise_std = 0.35;
  uint64_t seed = 1234;
};

std::vector<LabeledSeries> generate_synthetic_series(const DatasetSpec& spec,
                                                     const SyntheticConfig& cfg);

// PAMAP2 protocol files: <root>/<name>/raw/**/subject*.dat. Channels are the
// 16g accelerometer and gyroscope triples of the hand, chest, and ankle IMUs.
std::vector<LabeledSeries> load_pamap2(const DatasetSpec& spec);

// USC-HAD: <root>/<name>/raw/Subject*/a<A>t<T>.mat with a [N x 6]
// 'sensor_readings' variable (3-axis accelerometer + 3-axis gyroscope).
std::vector<LabeledSeries> load_usc_had(const DatasetSpec& spec);

// MM-Fi environment folders: <root>/<name>/raw/E*/S*/A*/{mmwave,wifi-csi}/frame*.
// mmWave point clouds are truncated/padded to a fixed per-frame point budget
// and flattened; Wi-Fi CSI amplitude frames are packet-averaged and
// subcarrier-strided down to the configured channel count.
std::vector<LabeledSeries> load_mmfi(const DatasetSpec& spec);

// Generic escape hatch: <root>/<name>/raw/<class name>/<subject>/*.csv with
// one timestep per row and one channel per column.
std::vector<LabeledSeries> load_csv_tree(const DatasetSpec& spec);

// Dispatches on spec.name: "synthetic*" uses the generator (cfg required),
// "pamap2*" / "usc_had*" / "mmfi*" use the corresponding raw loaders, and
// anything else falls back to the CSV tree.
std::vector<LabeledSeries> load_raw_series(const DatasetSpec& spec,
                                           const SyntheticConfig* synthetic_cfg = nullptr);

std::vector<std::string> default_class_list(const std::string& dataset_name);

}  // namespace iotzsl
