#include "iotzsl/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "iotzsl/archive.hpp"
#include "iotzsl/rng.hpp"

#include <json.hpp>

namespace fs = std::filesystem;
using nlohmann::json;

namespace iotzsl {

const char* modality_name(Modality m) {
  switch (m) {
    case Modality::imu: return "imu";
    case Modality::mmwave: return "mmwave";
    case Modality::wifi: return "wifi";
  }
  return "imu";
}

Modality modality_from_name(const std::string& s) {
  if (s == "imu") return Modality::imu;
  if (s == "mmwave") return Modality::mmwave;
  if (s == "wifi") return Modality::wifi;
  throw Error(ErrKind::config, "unknown modality: " + s);
}

int DatasetSpec::window_len() const {
  return static_cast<int>(std::lround(window_seconds * sample_rate));
}

void DatasetSpec::validate() const {
  IOTZSL_REQUIRE(!name.empty(), ErrKind::config, "dataset name is empty");
  IOTZSL_REQUIRE(window_len() >= 1, ErrKind::config,
                 "window length in timesteps must be >= 1 (got window_seconds=" +
                     std::to_string(window_seconds) + ", sample_rate=" + std::to_string(sample_rate) + ")");
  IOTZSL_REQUIRE(overlap_fraction >= 0.0 && overlap_fraction < 1.0, ErrKind::config,
                 "overlap_fraction must be in [0,1)");
  IOTZSL_REQUIRE(channels >= 1, ErrKind::config, "channel count must be >= 1");
  std::set<std::string> uniq;
  for (const auto& c : class_list) {
    IOTZSL_REQUIRE(!c.empty(), ErrKind::config, "empty class name in class_list");
    IOTZSL_REQUIRE(uniq.insert(c).second, ErrKind::config, "duplicate class name: " + c);
  }
}

int window_stride(int window_len, double overlap_fraction) {
  IOTZSL_REQUIRE(overlap_fraction >= 0.0 && overlap_fraction < 1.0, ErrKind::validation,
                 "overlap_fraction must be in [0,1)");
  const int s = static_cast<int>(std::lround(window_len * (1.0 - overlap_fraction)));
  return std::max(1, s);
}

long window_count(long series_len, int window_len, int stride) {
  if (series_len < window_len) return 0;
  return (series_len - window_len) / stride + 1;
}

std::vector<SensorWindow> window_series(const Mat& series, int window_len,
                                        double overlap_fraction, int label,
                                        Modality modality, const std::string& subject_id) {
  IOTZSL_REQUIRE(window_len >= 1, ErrKind::validation, "window_len must be >= 1");
  const int stride = window_stride(window_len, overlap_fraction);
  const long T = series.cols();
  std::vector<SensorWindow> out;
  const long n = window_count(T, window_len, stride);
  out.reserve(static_cast<size_t>(std::max(0L, n)));
  for (long off = 0; off + window_len <= T; off += stride) {
    SensorWindow w;
    w.data = Mat(series.rows(), window_len);
    for (int c = 0; c < series.rows(); ++c)
      for (int t = 0; t < window_len; ++t) w.data(c, t) = series(c, off + t);
    w.label = label;
    w.modality = modality;
    w.subject_id = subject_id;
    out.push_back(std::move(w));
  }
  return out;
}

bool FoldSplit::is_seen_class(int label) const {
  return std::find(seen_classes.begin(), seen_classes.end(), label) != seen_classes.end();
}

std::vector<FoldSplit> make_fold_splits(int n_classes, int n_unseen, int K, uint64_t seed) {
  IOTZSL_REQUIRE(n_unseen >= 1 && n_unseen < n_classes, ErrKind::validation,
                 "n_unseen must be in [1, n_classes)");
  IOTZSL_REQUIRE(K >= 1, ErrKind::validation, "K must be >= 1");
  std::vector<FoldSplit> folds;
  for (int k = 0; k < K; ++k) {
    Rng rng(fnv1a64(&k, sizeof(k), seed ^ 0x5eedf01d5ULL));
    std::vector<int> ids(n_classes);
    for (int i = 0; i < n_classes; ++i) ids[i] = i;
    rng.shuffle(ids);
    FoldSplit f;
    f.fold_index = k;
    f.rng_seed = seed + static_cast<uint64_t>(k);
    f.unseen_classes.assign(ids.begin(), ids.begin() + n_unseen);
    f.seen_classes.assign(ids.begin() + n_unseen, ids.end());
    std::sort(f.unseen_classes.begin(), f.unseen_classes.end());
    std::sort(f.seen_classes.begin(), f.seen_classes.end());
    folds.push_back(std::move(f));
  }
  return folds;
}

namespace {

// 8:1:1 split of one class's window indices (already shuffled).
void split_811(const std::vector<int>& idx, std::vector<int>& train, std::vector<int>& val,
               std::vector<int>& test) {
  const int n = static_cast<int>(idx.size());
  if (n < 10)
    warn("class with only " + std::to_string(n) + " windows; 8:1:1 split is best-effort");
  const int n_val = n / 10;
  const int n_test = n / 10;
  for (int i = 0; i < n; ++i) {
    if (i < n_val)
      val.push_back(idx[i]);
    else if (i < n_val + n_test)
      test.push_back(idx[i]);
    else
      train.push_back(idx[i]);
  }
}

}  // namespace

void partition_and_balance(FoldSplit& fold, const std::vector<SensorWindow>& windows) {
  IOTZSL_REQUIRE(!fold.seen_classes.empty(), ErrKind::validation, "fold has no seen classes");
  Rng rng(fold.rng_seed ^ 0xba1a9ceULL);

  std::map<int, std::vector<int>> by_class;
  for (int i = 0; i < static_cast<int>(windows.size()); ++i)
    by_class[windows[i].label].push_back(i);

  fold.train_seen.clear();
  fold.val_seen.clear();
  fold.test_seen.clear();
  fold.test_unseen.clear();

  for (int c : fold.seen_classes) {
    auto it = by_class.find(c);
    if (it == by_class.end()) {
      warn("seen class " + std::to_string(c) + " has no windows");
      continue;
    }
    if (fold.subject_wise) {
      // group this class's windows by subject and deal whole subjects out
      std::map<std::string, std::vector<int>> by_subj;
      for (int i : it->second) by_subj[windows[i].subject_id].push_back(i);
      std::vector<std::string> subjects;
      for (auto& [s, _] : by_subj) subjects.push_back(s);
      rng.shuffle(subjects);
      const size_t n_total = it->second.size();
      size_t quota_val = n_total / 10, quota_test = n_total / 10;
      std::vector<int> val_idx, test_idx, train_idx;
      for (const auto& s : subjects) {
        auto& grp = by_subj[s];
        if (val_idx.size() < quota_val)
          val_idx.insert(val_idx.end(), grp.begin(), grp.end());
        else if (test_idx.size() < quota_test)
          test_idx.insert(test_idx.end(), grp.begin(), grp.end());
        else
          train_idx.insert(train_idx.end(), grp.begin(), grp.end());
      }
      if (train_idx.empty())
        warn("subject-wise split left class " + std::to_string(c) + " without train windows");
      fold.train_seen.insert(fold.train_seen.end(), train_idx.begin(), train_idx.end());
      fold.val_seen.insert(fold.val_seen.end(), val_idx.begin(), val_idx.end());
      fold.test_seen.insert(fold.test_seen.end(), test_idx.begin(), test_idx.end());
    } else {
      std::vector<int> idx = it->second;
      rng.shuffle(idx);
      split_811(idx, fold.train_seen, fold.val_seen, fold.test_seen);
    }
  }

  for (int c : fold.unseen_classes) {
    auto it = by_class.find(c);
    if (it == by_class.end()) continue;
    fold.test_unseen.insert(fold.test_unseen.end(), it->second.begin(), it->second.end());
  }
  IOTZSL_REQUIRE(!fold.test_unseen.empty(), ErrKind::validation,
                 "unseen-class test pool is empty for fold " + std::to_string(fold.fold_index));

  // balance the test set by subsampling the larger side
  auto subsample = [&rng](std::vector<int>& v, size_t target) {
    rng.shuffle(v);
    v.resize(target);
    std::sort(v.begin(), v.end());
  };
  const size_t target = std::min(fold.test_seen.size(), fold.test_unseen.size());
  IOTZSL_REQUIRE(target > 0, ErrKind::validation,
                 "balanced test set would be empty (seen test pool " +
                     std::to_string(fold.test_seen.size()) + ", unseen pool " +
                     std::to_string(fold.test_unseen.size()) + ")");
  subsample(fold.test_seen, target);
  subsample(fold.test_unseen, target);
  std::sort(fold.train_seen.begin(), fold.train_seen.end());
  std::sort(fold.val_seen.begin(), fold.val_seen.end());
}

namespace {

void write_ints(std::ostream& os, const char* key, const std::vector<int>& v) {
  os << key;
  for (int x : v) os << ' ' << x;
  os << '\n';
}

}  // namespace

void FoldSplit::save(const std::string& path) const {
  std::ofstream f(path, std::ios::trunc);
  IOTZSL_REQUIRE(f.good(), ErrKind::io, "cannot write fold split: " + path);
  f << "# iotzsl fold split\n";
  f << "fold_index " << fold_index << '\n';
  f << "rng_seed " << rng_seed << '\n';
  f << "subject_wise " << (subject_wise ? 1 : 0) << '\n';
  write_ints(f, "seen_classes", seen_classes);
  write_ints(f, "unseen_classes", unseen_classes);
  write_ints(f, "train_seen", train_seen);
  write_ints(f, "val_seen", val_seen);
  write_ints(f, "test_seen", test_seen);
  write_ints(f, "test_unseen", test_unseen);
}

FoldSplit FoldSplit::load(const std::string& path) {
  std::ifstream f(path);
  IOTZSL_REQUIRE(f.good(), ErrKind::io, "cannot read fold split: " + path);
  FoldSplit fs;
  std::string line;
  while (std::getline(f, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ss(line);
    std::string key;
    ss >> key;
    auto read_ints = [&ss]() {
      std::vector<int> v;
      int x;
      while (ss >> x) v.push_back(x);
      return v;
    };
    if (key == "fold_index") ss >> fs.fold_index;
    else if (key == "rng_seed") ss >> fs.rng_seed;
    else if (key == "subject_wise") { int b; ss >> b; fs.subject_wise = b != 0; }
    else if (key == "seen_classes") fs.seen_classes = read_ints();
    else if (key == "unseen_classes") fs.unseen_classes = read_ints();
    else if (key == "train_seen") fs.train_seen = read_ints();
    else if (key == "val_seen") fs.val_seen = read_ints();
    else if (key == "test_seen") fs.test_seen = read_ints();
    else if (key == "test_unseen") fs.test_unseen = read_ints();
    else throw Error(ErrKind::io, "unknown key in fold split file: " + key);
  }
  return fs;
}

bool repair_missing(Mat& window, double max_missing_fraction) {
  const int C = window.rows(), T = window.cols();
  long missing = 0;
  for (size_t i = 0; i < window.size(); ++i)
    if (!std::isfinite(window[i])) ++missing;
  if (missing == 0) return true;
  if (static_cast<double>(missing) > max_missing_fraction * static_cast<double>(window.size()))
    return false;

  for (int c = 0; c < C; ++c) {
    int first_valid = -1;
    for (int t = 0; t < T; ++t)
      if (std::isfinite(window(c, t))) { first_valid = t; break; }
    if (first_valid < 0) return false;  // channel entirely missing
    // leading edge
    for (int t = 0; t < first_valid; ++t) window(c, t) = window(c, first_valid);
    int last_valid = first_valid;
    for (int t = first_valid + 1; t < T; ++t) {
      if (std::isfinite(window(c, t))) {
        if (t - last_valid > 1) {
          const double lo = window(c, last_valid), hi = window(c, t);
          for (int u = last_valid + 1; u < t; ++u)
            window(c, u) = lo + (hi - lo) * (u - last_valid) / static_cast<double>(t - last_valid);
        }
        last_valid = t;
      }
    }
    for (int t = last_valid + 1; t < T; ++t) window(c, t) = window(c, last_valid);
  }
  return true;
}

std::vector<SensorWindow> window_all(const std::vector<LabeledSeries>& series,
                                     const DatasetSpec& spec) {
  spec.validate();
  const int wl = spec.window_len();
  std::vector<SensorWindow> out;
  size_t dropped = 0;
  for (const auto& s : series) {
    IOTZSL_REQUIRE(s.series.rows() == spec.channels, ErrKind::validation,
                   "series channel count " + std::to_string(s.series.rows()) +
                       " does not match spec channels " + std::to_string(spec.channels));
    IOTZSL_REQUIRE(s.label >= 0 && s.label < static_cast<int>(spec.class_list.size()),
                   ErrKind::validation, "series label out of range");
    auto ws = window_series(s.series, wl, spec.overlap_fraction, s.label, spec.modality,
                            s.subject_id);
    for (auto& w : ws) {
      if (repair_missing(w.data))
        out.push_back(std::move(w));
      else
        ++dropped;
    }
  }
  if (dropped > 0)
    warn("dropped " + std::to_string(dropped) + " windows with >20% missing values");
  return out;
}

void WindowStore::save(const std::string& path) const {
  IOTZSL_REQUIRE(!windows.empty(), ErrKind::validation, "refusing to cache empty window set");
  const int C = windows[0].data.rows();
  const int T = windows[0].data.cols();
  Mat flat(static_cast<int>(windows.size()), C * T);
  Mat labels(static_cast<int>(windows.size()), 1);
  json subjects = json::array();
  for (size_t i = 0; i < windows.size(); ++i) {
    const auto& w = windows[i];
    IOTZSL_REQUIRE(w.data.rows() == C && w.data.cols() == T, ErrKind::validation,
                   "inconsistent window shapes in store");
    for (int c = 0; c < C; ++c)
      for (int t = 0; t < T; ++t) flat(static_cast<int>(i), c * T + t) = w.data(c, t);
    labels(static_cast<int>(i), 0) = w.label;
    subjects.push_back(w.subject_id);
  }
  json meta;
  meta["name"] = spec.name;
  meta["class_list"] = spec.class_list;
  meta["sample_rate"] = spec.sample_rate;
  meta["window_seconds"] = spec.window_seconds;
  meta["overlap_fraction"] = spec.overlap_fraction;
  meta["modality"] = modality_name(spec.modality);
  meta["channels"] = C;
  meta["timesteps"] = T;
  meta["subjects"] = subjects;

  TensorArchive ar;
  ar.tensors["windows"] = std::move(flat);
  ar.tensors["labels"] = std::move(labels);
  ar.blobs["meta"] = meta.dump();
  fs::create_directories(fs::path(path).parent_path());
  ar.save(path);
}

WindowStore WindowStore::load(const std::string& path) {
  TensorArchive ar = TensorArchive::load(path);
  const json meta = json::parse(ar.blob("meta"));
  WindowStore store;
  store.spec.name = meta.at("name").get<std::string>();
  store.spec.class_list = meta.at("class_list").get<std::vector<std::string>>();
  store.spec.sample_rate = meta.at("sample_rate").get<double>();
  store.spec.window_seconds = meta.at("window_seconds").get<double>();
  store.spec.overlap_fraction = meta.at("overlap_fraction").get<double>();
  store.spec.modality = modality_from_name(meta.at("modality").get<std::string>());
  store.spec.channels = meta.at("channels").get<int>();

  const Mat& flat = ar.tensor("windows");
  const Mat& labels = ar.tensor("labels");
  const int C = meta.at("channels").get<int>();
  const int T = meta.at("timesteps").get<int>();
  const auto subjects = meta.at("subjects").get<std::vector<std::string>>();
  IOTZSL_REQUIRE(flat.cols() == C * T, ErrKind::io, "window cache shape mismatch");

  store.windows.resize(flat.rows());
  for (int i = 0; i < flat.rows(); ++i) {
    auto& w = store.windows[i];
    w.data = Mat(C, T);
    for (int c = 0; c < C; ++c)
      for (int t = 0; t < T; ++t) w.data(c, t) = flat(i, c * T + t);
    w.label = static_cast<int>(labels(i, 0));
    w.modality = store.spec.modality;
    w.subject_id = subjects[static_cast<size_t>(i)];
    IOTZSL_REQUIRE(all_finite(w.data), ErrKind::io, "non-finite values in cached window");
  }
  return store;
}

std::string dataset_cache_path(const DatasetSpec& spec) {
  return (fs::path(spec.root_path) / spec.name / "cache" / "windows.bin").string();
}

}  // namespace iotzsl
