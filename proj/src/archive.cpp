#include "iotzsl/archive.hpp"

#include <cstring>
#include <fstream>
#include <sstream>
#include <vector>

namespace iotzsl {

namespace {

constexpr char kMagic[8] = {'I', 'Z', 'A', 'R', 'C', 'H', '0', '1'};

void put_u64(std::string& out, uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

uint64_t get_u64(const std::string& in, size_t& pos) {
  IOTZSL_REQUIRE(pos + 8 <= in.size(), ErrKind::io, "archive: truncated u64");
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(static_cast<uint8_t>(in[pos + i])) << (8 * i);
  pos += 8;
  return v;
}

void put_str(std::string& out, const std::string& s) {
  put_u64(out, s.size());
  out.append(s);
}

std::string get_str(const std::string& in, size_t& pos) {
  const uint64_t n = get_u64(in, pos);
  IOTZSL_REQUIRE(pos + n <= in.size(), ErrKind::io, "archive: truncated string");
  std::string s = in.substr(pos, n);
  pos += n;
  return s;
}

std::string serialize(const TensorArchive& ar) {
  std::string out;
  out.append(kMagic, sizeof(kMagic));
  put_u64(out, ar.tensors.size());
  put_u64(out, ar.blobs.size());
  for (const auto& [name, m] : ar.tensors) {
    put_str(out, name);
    put_u64(out, static_cast<uint64_t>(m.rows()));
    put_u64(out, static_cast<uint64_t>(m.cols()));
    const size_t bytes = m.size() * sizeof(double);
    size_t old = out.size();
    out.resize(old + bytes);
    std::memcpy(out.data() + old, m.data(), bytes);
  }
  for (const auto& [name, b] : ar.blobs) {
    put_str(out, name);
    put_str(out, b);
  }
  return out;
}

}  // namespace

uint64_t fnv1a64(const void* data, size_t n, uint64_t h) {
  const auto* p = static_cast<const uint8_t*>(data);
  for (size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

const Mat& TensorArchive::tensor(const std::string& name) const {
  auto it = tensors.find(name);
  IOTZSL_REQUIRE(it != tensors.end(), ErrKind::io, "archive: missing tensor '" + name + "'");
  return it->second;
}

const std::string& TensorArchive::blob(const std::string& name) const {
  auto it = blobs.find(name);
  IOTZSL_REQUIRE(it != blobs.end(), ErrKind::io, "archive: missing blob '" + name + "'");
  return it->second;
}

uint64_t TensorArchive::fingerprint() const {
  const std::string bytes = serialize(*this);
  return fnv1a64(bytes.data(), bytes.size());
}

void TensorArchive::save(const std::string& path) const {
  const std::string bytes = serialize(*this);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  IOTZSL_REQUIRE(f.good(), ErrKind::io, "archive: cannot open for write: " + path);
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  IOTZSL_REQUIRE(f.good(), ErrKind::io, "archive: write failed: " + path);
}

TensorArchive TensorArchive::load(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  IOTZSL_REQUIRE(f.good(), ErrKind::io, "archive: cannot open: " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  const std::string in = ss.str();

  IOTZSL_REQUIRE(in.size() >= sizeof(kMagic) && std::memcmp(in.data(), kMagic, sizeof(kMagic)) == 0,
                 ErrKind::io, "archive: bad magic in " + path);
  size_t pos = sizeof(kMagic);
  const uint64_t n_tensors = get_u64(in, pos);
  const uint64_t n_blobs = get_u64(in, pos);

  TensorArchive ar;
  for (uint64_t i = 0; i < n_tensors; ++i) {
    const std::string name = get_str(in, pos);
    const auto rows = static_cast<int>(get_u64(in, pos));
    const auto cols = static_cast<int>(get_u64(in, pos));
    Mat m(rows, cols);
    const size_t bytes = m.size() * sizeof(double);
    IOTZSL_REQUIRE(pos + bytes <= in.size(), ErrKind::io, "archive: truncated tensor " + name);
    std::memcpy(m.data(), in.data() + pos, bytes);
    pos += bytes;
    ar.tensors.emplace(name, std::move(m));
  }
  for (uint64_t i = 0; i < n_blobs; ++i) {
    const std::string name = get_str(in, pos);
    ar.blobs.emplace(name, get_str(in, pos));
  }
  return ar;
}

}  // namespace iotzsl
