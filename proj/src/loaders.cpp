#include "iotzsl/loaders.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "iotzsl/archive.hpp"
#include "iotzsl/mat5.hpp"
#include "iotzsl/rng.hpp"

namespace fs = std::filesystem;

namespace iotzsl {

namespace {
constexpr double kTwoPi = 6.28318530717958647693;

bool starts_with(const std::string& s, const std::string& prefix) {
  return s.rfind(prefix, 0) == 0;
}

fs::path raw_dir(const DatasetSpec& spec) {
  return fs::path(spec.root_path) / spec.name / "raw";
}

std::vector<fs::path> sorted_entries(const fs::path& dir) {
  std::vector<fs::path> out;
  if (!fs::exists(dir)) return out;
  for (const auto& e : fs::directory_iterator(dir)) out.push_back(e.path());
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

std::vector<LabeledSeries> generate_synthetic_series(const DatasetSpec& spec,
                                                     const SyntheticConfig& cfg) {
  spec.validate();
  const int n_classes = static_cast<int>(spec.class_list.size());
  const int T = static_cast<int>(std::lround(cfg.series_seconds * spec.sample_rate));
  IOTZSL_REQUIRE(T >= spec.window_len(), ErrKind::config,
                 "synthetic series shorter than one window");

  // Per-(class, channel) signal parameters, fixed by the corpus seed.
  struct ChannelSig { double amp1, freq1, amp2, freq2, offset; };
  std::vector<std::vector<ChannelSig>> sig(n_classes, std::vector<ChannelSig>(spec.channels));
  {
    uint64_t mix = cfg.seed ^ fnv1a64(spec.name.data(), spec.name.size());
    Rng prng(mix);
    for (int k = 0; k < n_classes; ++k)
      for (int c = 0; c < spec.channels; ++c) {
        auto& s = sig[k][c];
        s.amp1 = prng.uniform(0.6, 1.8);
        s.freq1 = prng.uniform(0.3, spec.sample_rate / 4.0);
        s.amp2 = prng.uniform(0.1, 0.7);
        s.freq2 = prng.uniform(0.3, spec.sample_rate / 4.0);
        s.offset = prng.uniform(-1.0, 1.0);
      }
  }

  std::vector<LabeledSeries> out;
  Rng rng(cfg.seed ^ 0x51f7e11cULL);
  for (int k = 0; k < n_classes; ++k) {
    for (int s = 0; s < cfg.n_subjects; ++s) {
      for (int r = 0; r < cfg.series_per_subject; ++r) {
        LabeledSeries ls;
        ls.label = k;
        ls.subject_id = "subj" + std::to_string(s);
        ls.series = Mat(spec.channels, T);
        const double subj_gain = 1.0 + 0.08 * (s - cfg.n_subjects / 2.0) / cfg.n_subjects;
        for (int c = 0; c < spec.channels; ++c) {
          const auto& sg = sig[k][c];
          const double phase1 = rng.uniform(0.0, kTwoPi);
          const double phase2 = rng.uniform(0.0, kTwoPi);
          for (int t = 0; t < T; ++t) {
            const double tt = t / spec.sample_rate;
            double v = sg.offset + subj_gain * (sg.amp1 * std::sin(kTwoPi * sg.freq1 * tt + phase1) +
                                                sg.amp2 * std::sin(kTwoPi * sg.freq2 * tt + phase2));
            v += cfg.noise_std * rng.gaussian();
            ls.series(c, t) = v;
          }
        }
        out.push_back(std::move(ls));
      }
    }
  }
  return out;
}

namespace {

// PAMAP2 protocol activity ids in class-list order.
constexpr int kPamap2ActivityIds[12] = {1, 2, 3, 4, 5, 6, 7, 12, 13, 16, 17, 24};

// 0-based columns of the 16g accelerometer + gyroscope triples for the
// hand (cols 3..19), chest (20..36) and ankle (37..53) IMUs.
constexpr int kPamap2Channels[18] = {4,  5,  6,  10, 11, 12,   // hand
                                     21, 22, 23, 27, 28, 29,   // chest
                                     38, 39, 40, 44, 45, 46};  // ankle

int pamap2_class_of(int activity_id) {
  for (int i = 0; i < 12; ++i)
    if (kPamap2ActivityIds[i] == activity_id) return i;
  return -1;
}

}  // namespace

std::vector<LabeledSeries> load_pamap2(const DatasetSpec& spec) {
  IOTZSL_REQUIRE(spec.channels == 18, ErrKind::config,
                 "pamap2 loader emits 18 channels; spec declares " + std::to_string(spec.channels));
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(raw_dir(spec)))
    if (e.is_regular_file() && e.path().extension() == ".dat") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  IOTZSL_REQUIRE(!files.empty(), ErrKind::io, "pamap2: no .dat files under " + raw_dir(spec).string());

  std::vector<LabeledSeries> out;
  for (const auto& file : files) {
    std::ifstream f(file);
    IOTZSL_REQUIRE(f.good(), ErrKind::io, "pamap2: cannot open " + file.string());
    const std::string subject = file.stem().string();
    std::string line;
    int cur_class = -1;
    std::vector<std::array<double, 18>> run;
    auto flush = [&]() {
      if (cur_class >= 0 && !run.empty()) {
        LabeledSeries ls;
        ls.label = cur_class;
        ls.subject_id = subject;
        ls.series = Mat(18, static_cast<int>(run.size()));
        for (size_t t = 0; t < run.size(); ++t)
          for (int c = 0; c < 18; ++c) ls.series(c, static_cast<int>(t)) = run[t][c];
        out.push_back(std::move(ls));
      }
      run.clear();
    };
    while (std::getline(f, line)) {
      if (line.empty()) continue;
      std::istringstream ss(line);
      std::vector<double> cols;
      cols.reserve(54);
      double v;
      while (ss >> v) cols.push_back(v);
      // tolerate "NaN" tokens that operator>> rejects
      if (cols.size() < 54) {
        cols.clear();
        std::istringstream ss2(line);
        std::string tok;
        while (ss2 >> tok) cols.push_back(std::strtod(tok.c_str(), nullptr));
      }
      if (cols.size() < 54) continue;
      const int cls = pamap2_class_of(static_cast<int>(cols[1]));
      if (cls != cur_class) {
        flush();
        cur_class = cls;
      }
      if (cls < 0) continue;  // transient (0) or non-protocol activity
      std::array<double, 18> row{};
      for (int c = 0; c < 18; ++c) row[c] = cols[kPamap2Channels[c]];
      run.push_back(row);
    }
    flush();
  }
  return out;
}

std::vector<LabeledSeries> load_usc_had(const DatasetSpec& spec) {
  IOTZSL_REQUIRE(spec.channels == 6, ErrKind::config,
                 "usc_had loader emits 6 channels; spec declares " + std::to_string(spec.channels));
  std::vector<LabeledSeries> out;
  for (const auto& subj_dir : sorted_entries(raw_dir(spec))) {
    if (!fs::is_directory(subj_dir)) continue;
    for (const auto& file : sorted_entries(subj_dir)) {
      if (file.extension() != ".mat") continue;
      // file name aXtY.mat: activity X in 1..12, trial Y
      const std::string stem = file.stem().string();
      if (stem.size() < 4 || stem[0] != 'a') continue;
      const size_t tpos = stem.find('t');
      if (tpos == std::string::npos) continue;
      const int activity = std::atoi(stem.substr(1, tpos - 1).c_str());
      if (activity < 1 || activity > static_cast<int>(spec.class_list.size())) continue;

      auto vars = read_mat5(file.string());
      auto it = vars.find("sensor_readings");
      if (it == vars.end()) {
        warn("usc_had: no sensor_readings in " + file.string());
        continue;
      }
      Mat readings = it->second.as_mat();  // [N x 6]
      IOTZSL_REQUIRE(readings.cols() == 6, ErrKind::io,
                     "usc_had: expected 6 sensor columns in " + file.string());
      LabeledSeries ls;
      ls.label = activity - 1;
      ls.subject_id = subj_dir.filename().string();
      ls.series = transpose(readings);
      out.push_back(std::move(ls));
    }
  }
  IOTZSL_REQUIRE(!out.empty(), ErrKind::io, "usc_had: no recordings under " + raw_dir(spec).string());
  return out;
}

namespace {

// One mmWave frame: float32 quintuples (x, y, z, doppler, intensity). Points
// are kept in descending intensity order, then padded with zeros up to the
// per-frame budget.
std::vector<double> read_mmwave_frame(const fs::path& file, int point_budget) {
  std::ifstream f(file, std::ios::binary);
  IOTZSL_REQUIRE(f.good(), ErrKind::io, "mmfi: cannot open " + file.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  const std::string buf = ss.str();
  const size_t n_points = buf.size() / (5 * sizeof(float));
  std::vector<std::array<double, 5>> pts(n_points);
  for (size_t i = 0; i < n_points; ++i) {
    for (int j = 0; j < 5; ++j) {
      float v;
      std::memcpy(&v, buf.data() + (i * 5 + j) * sizeof(float), sizeof(float));
      pts[i][j] = v;
    }
  }
  std::stable_sort(pts.begin(), pts.end(),
                   [](const auto& a, const auto& b) { return a[4] > b[4]; });
  std::vector<double> flat(static_cast<size_t>(point_budget) * 5, 0.0);
  const size_t keep = std::min(n_points, static_cast<size_t>(point_budget));
  for (size_t i = 0; i < keep; ++i)
    for (int j = 0; j < 5; ++j) flat[i * 5 + j] = pts[i][j];
  return flat;
}

// One Wi-Fi CSI frame: amplitude array [antennas x subcarriers x packets],
// averaged over packets and strided down to `channels` values.
std::vector<double> read_wifi_frame(const fs::path& file, int channels) {
  auto vars = read_mat5(file.string());
  const Mat5Array* csi = nullptr;
  for (const auto& [name, arr] : vars)
    if (name == "CSIamp" || name == "csi_amp" || name == "amp") csi = &arr;
  if (!csi && !vars.empty()) csi = &vars.begin()->second;
  IOTZSL_REQUIRE(csi, ErrKind::io, "mmfi: no CSI variable in " + file.string());

  const auto& dims = csi->dims;
  long spatial = 1;
  int packets = 1;
  if (dims.size() >= 3) {
    spatial = static_cast<long>(dims[0]) * dims[1];
    packets = dims[2];
  } else if (dims.size() == 2) {
    spatial = dims[0];
    packets = dims[1];
  } else {
    spatial = static_cast<long>(csi->data.size());
  }
  std::vector<double> mean(spatial, 0.0);
  for (int p = 0; p < packets; ++p)
    for (long i = 0; i < spatial; ++i) mean[i] += csi->data[static_cast<size_t>(p) * spatial + i];
  for (auto& v : mean) v /= packets;

  std::vector<double> out(channels, 0.0);
  const double stride = static_cast<double>(spatial) / channels;
  for (int c = 0; c < channels; ++c) out[c] = mean[static_cast<long>(c * stride)];
  return out;
}

}  // namespace

std::vector<LabeledSeries> load_mmfi(const DatasetSpec& spec) {
  const bool is_mmwave = spec.modality == Modality::mmwave;
  if (is_mmwave)
    IOTZSL_REQUIRE(spec.channels % 5 == 0, ErrKind::config,
                   "mmfi mmwave channel count must be a multiple of 5 (points x 5 fields)");
  const int point_budget = spec.channels / 5;
  const std::string sub_dir = is_mmwave ? "mmwave" : "wifi-csi";

  std::vector<LabeledSeries> out;
  for (const auto& env : sorted_entries(raw_dir(spec))) {
    if (!fs::is_directory(env)) continue;
    for (const auto& subj : sorted_entries(env)) {
      if (!fs::is_directory(subj)) continue;
      for (const auto& act : sorted_entries(subj)) {
        if (!fs::is_directory(act)) continue;
        const std::string a = act.filename().string();
        if (a.size() < 2 || (a[0] != 'A' && a[0] != 'a')) continue;
        const int label = std::atoi(a.substr(1).c_str()) - 1;
        if (label < 0 || label >= static_cast<int>(spec.class_list.size())) continue;
        const fs::path frames_dir = act / sub_dir;
        if (!fs::exists(frames_dir)) continue;
        auto frames = sorted_entries(frames_dir);
        if (frames.empty()) continue;

        LabeledSeries ls;
        ls.label = label;
        ls.subject_id = subj.filename().string();
        ls.series = Mat(spec.channels, static_cast<int>(frames.size()));
        int t = 0;
        for (const auto& frame : frames) {
          std::vector<double> v = is_mmwave ? read_mmwave_frame(frame, point_budget)
                                            : read_wifi_frame(frame, spec.channels);
          for (int c = 0; c < spec.channels; ++c) ls.series(c, t) = v[static_cast<size_t>(c)];
          ++t;
        }
        out.push_back(std::move(ls));
      }
    }
  }
  IOTZSL_REQUIRE(!out.empty(), ErrKind::io, "mmfi: no sequences under " + raw_dir(spec).string());
  return out;
}

std::vector<LabeledSeries> load_csv_tree(const DatasetSpec& spec) {
  std::vector<LabeledSeries> out;
  for (const auto& class_dir : sorted_entries(raw_dir(spec))) {
    if (!fs::is_directory(class_dir)) continue;
    const std::string cname = class_dir.filename().string();
    const auto it = std::find(spec.class_list.begin(), spec.class_list.end(), cname);
    if (it == spec.class_list.end()) {
      warn("csv loader: directory '" + cname + "' is not in the class list; skipped");
      continue;
    }
    const int label = static_cast<int>(it - spec.class_list.begin());
    for (const auto& subj_dir : sorted_entries(class_dir)) {
      if (!fs::is_directory(subj_dir)) continue;
      for (const auto& file : sorted_entries(subj_dir)) {
        if (file.extension() != ".csv") continue;
        std::ifstream f(file);
        std::vector<std::vector<double>> rows;
        std::string line;
        while (std::getline(f, line)) {
          if (line.empty()) continue;
          std::vector<double> row;
          std::stringstream ss(line);
          std::string cell;
          while (std::getline(ss, cell, ',')) row.push_back(std::strtod(cell.c_str(), nullptr));
          if (!row.empty()) rows.push_back(std::move(row));
        }
        if (rows.empty()) continue;
        IOTZSL_REQUIRE(static_cast<int>(rows[0].size()) == spec.channels, ErrKind::io,
                       "csv loader: column count mismatch in " + file.string());
        LabeledSeries ls;
        ls.label = label;
        ls.subject_id = subj_dir.filename().string();
        ls.series = Mat(spec.channels, static_cast<int>(rows.size()));
        for (size_t t = 0; t < rows.size(); ++t)
          for (int c = 0; c < spec.channels; ++c)
            ls.series(c, static_cast<int>(t)) = rows[t][static_cast<size_t>(c)];
        out.push_back(std::move(ls));
      }
    }
  }
  IOTZSL_REQUIRE(!out.empty(), ErrKind::io, "csv loader: no recordings under " + raw_dir(spec).string());
  return out;
}

std::vector<LabeledSeries> load_raw_series(const DatasetSpec& spec,
                                           const SyntheticConfig* synthetic_cfg) {
  if (starts_with(spec.name, "synthetic")) {
    SyntheticConfig cfg;
    if (synthetic_cfg) cfg = *synthetic_cfg;
    return generate_synthetic_series(spec, cfg);
  }
  if (starts_with(spec.name, "pamap2")) return load_pamap2(spec);
  if (starts_with(spec.name, "usc_had")) return load_usc_had(spec);
  if (starts_with(spec.name, "mmfi")) return load_mmfi(spec);
  return load_csv_tree(spec);
}

std::vector<std::string> default_class_list(const std::string& name) {
  if (starts_with(name, "usc_had"))
    return {"Walking Forward", "Walking Left",   "Walking Right", "Walking Upstairs",
            "Walking Downstairs", "Running Forward", "Jumping Up", "Sitting",
            "Standing", "Sleeping", "Elevator Up", "Elevator Down"};
  if (starts_with(name, "pamap2"))
    return {"lying", "sitting", "standing", "walking", "running", "cycling",
            "nordic walking", "ascending stairs", "descending stairs",
            "vacuum cleaning", "ironing", "rope jumping"};
  if (starts_with(name, "mmfi"))
    return {"stretching and relaxing", "chest expansion horizontal", "chest expansion vertical",
            "twist left", "twist right", "mark time", "limb extension left",
            "limb extension right", "lunge left", "lunge right", "limb extension both",
            "squat", "raising hand left", "raising hand right", "lunge both",
            "waving hand left", "waving hand right", "picking up things",
            "throwing left", "throwing right", "kicking left", "kicking right",
            "body extension left", "body extension right", "jumping up",
            "bowing", "side bend"};
  if (starts_with(name, "synthetic"))
    return {"walking", "running", "sitting", "standing", "jumping",
            "cycling", "climbing stairs", "lying down"};
  return {};
}

}  // namespace iotzsl

namespace iotzsl {

WindowStore load_or_build_windows(const DatasetSpec& spec, bool force_rebuild) {
  spec.validate();
  const std::string cache = dataset_cache_path(spec);
  if (!force_rebuild && fs::exists(cache)) {
    WindowStore store = WindowStore::load(cache);
    IOTZSL_REQUIRE(store.spec.class_list == spec.class_list, ErrKind::config,
                   "window cache class list does not match spec; rebuild with prepare");
    return store;
  }
  WindowStore store;
  store.spec = spec;
  store.windows = window_all(load_raw_series(spec), spec);
  IOTZSL_REQUIRE(!store.windows.empty(), ErrKind::io,
                 "dataset '" + spec.name + "' produced no windows");
  store.save(cache);
  return store;
}

}  // namespace iotzsl
