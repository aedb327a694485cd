#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "iotzsl/mat.hpp"

namespace iotzsl {

// Self-describing keyed tensor archive used for checkpoints, dataset caches,
// synthesized-data dumps, and detector state. Entries are named double
// matrices plus named byte blobs (configs, class lists). The on-disk layout
// is little-endian and versioned.
class TensorArchive {
 public:
  std::map<std::string, Mat> tensors;
  std::map<std::string, std::string> blobs;

  void save(const std::string& path) const;
  static TensorArchive load(const std::string& path);

  bool has_tensor(const std::string& name) const { return tensors.count(name) > 0; }
  bool has_blob(const std::string& name) const { return blobs.count(name) > 0; }

  const Mat& tensor(const std::string& name) const;
  const std::string& blob(const std::string& name) const;

  // FNV-1a over the canonical serialized form; stable identity for "was this
  // detector built against this checkpoint" checks.
  uint64_t fingerprint() const;
};

uint64_t fnv1a64(const void* data, size_t n, uint64_t h = 0xcbf29ce484222325ULL);

}  // namespace iotzsl
