#include "iotzsl/mat5.hpp"

#include <cstring>
#include <fstream>
#include <sstream>

#include <zlib.h>

namespace iotzsl {

namespace {

enum MiType : uint32_t {
  miINT8 = 1, miUINT8 = 2, miINT16 = 3, miUINT16 = 4, miINT32 = 5, miUINT32 = 6,
  miSINGLE = 7, miDOUBLE = 9, miINT64 = 12, miUINT64 = 13, miMATRIX = 14,
  miCOMPRESSED = 15, miUTF8 = 16,
};

struct Cursor {
  const uint8_t* p;
  size_t n;
  size_t pos = 0;

  bool done() const { return pos >= n; }
  void need(size_t k, const char* what) const {
    IOTZSL_REQUIRE(pos + k <= n, ErrKind::io, std::string("mat5: truncated ") + what);
  }
  uint32_t u32() {
    need(4, "u32");
    uint32_t v;
    std::memcpy(&v, p + pos, 4);
    pos += 4;
    return v;
  }
  const uint8_t* take(size_t k, const char* what) {
    need(k, what);
    const uint8_t* q = p + pos;
    pos += k;
    return q;
  }
  void align8() { pos = (pos + 7) & ~size_t(7); }
};

struct Element {
  uint32_t type = 0;
  const uint8_t* data = nullptr;
  size_t size = 0;
};

Element read_element(Cursor& c) {
  Element e;
  const uint32_t word = c.u32();
  if ((word & 0xffff0000u) != 0) {  // small data element: size in upper 16 bits
    e.type = word & 0xffffu;
    e.size = word >> 16;
    e.data = c.take(4, "small element");
  } else {
    e.type = word;
    e.size = c.u32();
    e.data = c.take(e.size, "element data");
    c.align8();
  }
  return e;
}

size_t mi_elem_size(uint32_t type) {
  switch (type) {
    case miINT8: case miUINT8: case miUTF8: return 1;
    case miINT16: case miUINT16: return 2;
    case miINT32: case miUINT32: case miSINGLE: return 4;
    case miDOUBLE: case miINT64: case miUINT64: return 8;
    default: return 0;
  }
}

std::vector<double> numeric_to_doubles(const Element& e) {
  const size_t esz = mi_elem_size(e.type);
  IOTZSL_REQUIRE(esz > 0, ErrKind::io, "mat5: unsupported numeric storage type " + std::to_string(e.type));
  const size_t count = e.size / esz;
  std::vector<double> out(count);
  for (size_t i = 0; i < count; ++i) {
    const uint8_t* q = e.data + i * esz;
    switch (e.type) {
      case miINT8: out[i] = *reinterpret_cast<const int8_t*>(q); break;
      case miUINT8: case miUTF8: out[i] = *q; break;
      case miINT16: { int16_t v; std::memcpy(&v, q, 2); out[i] = v; break; }
      case miUINT16: { uint16_t v; std::memcpy(&v, q, 2); out[i] = v; break; }
      case miINT32: { int32_t v; std::memcpy(&v, q, 4); out[i] = v; break; }
      case miUINT32: { uint32_t v; std::memcpy(&v, q, 4); out[i] = v; break; }
      case miSINGLE: { float v; std::memcpy(&v, q, 4); out[i] = v; break; }
      case miDOUBLE: { double v; std::memcpy(&v, q, 8); out[i] = v; break; }
      case miINT64: { int64_t v; std::memcpy(&v, q, 8); out[i] = static_cast<double>(v); break; }
      case miUINT64: { uint64_t v; std::memcpy(&v, q, 8); out[i] = static_cast<double>(v); break; }
      default: break;
    }
  }
  return out;
}

std::vector<uint8_t> zlib_inflate(const uint8_t* data, size_t n) {
  std::vector<uint8_t> out;
  out.resize(std::max<size_t>(n * 4, 1 << 16));
  z_stream zs{};
  IOTZSL_REQUIRE(inflateInit(&zs) == Z_OK, ErrKind::io, "mat5: inflateInit failed");
  zs.next_in = const_cast<Bytef*>(data);
  zs.avail_in = static_cast<uInt>(n);
  size_t written = 0;
  int rc = Z_OK;
  while (rc != Z_STREAM_END) {
    if (written == out.size()) out.resize(out.size() * 2);
    zs.next_out = out.data() + written;
    zs.avail_out = static_cast<uInt>(out.size() - written);
    rc = inflate(&zs, Z_NO_FLUSH);
    if (rc != Z_OK && rc != Z_STREAM_END) {
      inflateEnd(&zs);
      throw Error(ErrKind::io, "mat5: zlib inflate failed (" + std::to_string(rc) + ")");
    }
    written = out.size() - zs.avail_out;
  }
  inflateEnd(&zs);
  out.resize(written);
  return out;
}

// Parses a miMATRIX payload; returns false for unsupported array classes.
bool parse_matrix(const uint8_t* data, size_t n, std::string& name, Mat5Array& arr) {
  Cursor c{data, n};
  Element flags = read_element(c);
  IOTZSL_REQUIRE(flags.type == miUINT32 && flags.size >= 8, ErrKind::io, "mat5: bad array flags");
  uint32_t flag_word;
  std::memcpy(&flag_word, flags.data, 4);
  const uint32_t mx_class = flag_word & 0xffu;
  const bool is_complex = (flag_word & 0x0800u) != 0;
  // numeric classes mxDOUBLE(6) .. mxUINT64(15)
  if (mx_class < 6 || mx_class > 15) return false;

  Element dims_el = read_element(c);
  IOTZSL_REQUIRE(dims_el.type == miINT32, ErrKind::io, "mat5: bad dimensions element");
  const size_t ndims = dims_el.size / 4;
  arr.dims.resize(ndims);
  for (size_t i = 0; i < ndims; ++i) {
    int32_t d;
    std::memcpy(&d, dims_el.data + 4 * i, 4);
    arr.dims[i] = d;
  }

  Element name_el = read_element(c);
  name.assign(reinterpret_cast<const char*>(name_el.data), name_el.size);

  Element real = read_element(c);
  arr.data = numeric_to_doubles(real);
  (void)is_complex;  // imaginary part, if any, is ignored
  return true;
}

}  // namespace

Mat Mat5Array::as_mat() const {
  IOTZSL_REQUIRE(dims.size() == 2, ErrKind::validation,
                 "mat5: variable is not 2-D (ndims=" + std::to_string(dims.size()) + ")");
  const int r = dims[0], cc = dims[1];
  IOTZSL_REQUIRE(static_cast<size_t>(r) * cc == data.size(), ErrKind::io, "mat5: size mismatch");
  Mat m(r, cc);
  for (int j = 0; j < cc; ++j)
    for (int i = 0; i < r; ++i) m(i, j) = data[static_cast<size_t>(j) * r + i];
  return m;
}

std::map<std::string, Mat5Array> read_mat5(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  IOTZSL_REQUIRE(f.good(), ErrKind::io, "mat5: cannot open " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  const std::string buf = ss.str();
  IOTZSL_REQUIRE(buf.size() > 128, ErrKind::io, "mat5: file too small " + path);
  IOTZSL_REQUIRE(static_cast<uint8_t>(buf[126]) == 'I' && static_cast<uint8_t>(buf[127]) == 'M',
                 ErrKind::io, "mat5: unsupported endianness or not a level-5 MAT file: " + path);

  std::map<std::string, Mat5Array> vars;
  Cursor c{reinterpret_cast<const uint8_t*>(buf.data()) + 128, buf.size() - 128};
  std::vector<std::vector<uint8_t>> inflated_storage;
  while (!c.done()) {
    if (c.n - c.pos < 8) break;
    Element e = read_element(c);
    if (e.type == miCOMPRESSED) {
      inflated_storage.push_back(zlib_inflate(e.data, e.size));
      const auto& blob = inflated_storage.back();
      Cursor ic{blob.data(), blob.size()};
      Element inner = read_element(ic);
      if (inner.type != miMATRIX) continue;
      std::string name;
      Mat5Array arr;
      if (parse_matrix(inner.data, inner.size, name, arr)) vars[name] = std::move(arr);
    } else if (e.type == miMATRIX) {
      std::string name;
      Mat5Array arr;
      if (parse_matrix(e.data, e.size, name, arr)) vars[name] = std::move(arr);
    }
    // other top-level element types are skipped
  }
  return vars;
}

void write_mat5(const std::string& path, const std::string& var_name, const Mat5Array& arr,
                bool compress) {
  std::string payload;
  auto put_u32 = [&payload](uint32_t v) {
    payload.append(reinterpret_cast<const char*>(&v), 4);
  };
  auto pad8 = [&payload]() {
    while (payload.size() % 8 != 0) payload.push_back('\0');
  };

  // array flags
  put_u32(miUINT32);
  put_u32(8);
  put_u32(6);  // mxDOUBLE_CLASS
  put_u32(0);
  // dimensions
  put_u32(miINT32);
  put_u32(static_cast<uint32_t>(4 * arr.dims.size()));
  for (int d : arr.dims) put_u32(static_cast<uint32_t>(d));
  pad8();
  // name
  put_u32(miINT8);
  put_u32(static_cast<uint32_t>(var_name.size()));
  payload.append(var_name);
  pad8();
  // real data
  put_u32(miDOUBLE);
  put_u32(static_cast<uint32_t>(8 * arr.data.size()));
  payload.append(reinterpret_cast<const char*>(arr.data.data()), 8 * arr.data.size());
  pad8();

  std::string element;
  {
    std::string matrix_el;
    uint32_t t = miMATRIX, sz = static_cast<uint32_t>(payload.size());
    matrix_el.append(reinterpret_cast<const char*>(&t), 4);
    matrix_el.append(reinterpret_cast<const char*>(&sz), 4);
    matrix_el.append(payload);

    if (compress) {
      uLongf bound = compressBound(static_cast<uLong>(matrix_el.size()));
      std::vector<uint8_t> z(bound);
      IOTZSL_REQUIRE(compress2(z.data(), &bound,
                               reinterpret_cast<const Bytef*>(matrix_el.data()),
                               static_cast<uLong>(matrix_el.size()), 6) == Z_OK,
                     ErrKind::io, "mat5: deflate failed");
      uint32_t t2 = miCOMPRESSED, sz2 = static_cast<uint32_t>(bound);
      element.append(reinterpret_cast<const char*>(&t2), 4);
      element.append(reinterpret_cast<const char*>(&sz2), 4);
      element.append(reinterpret_cast<const char*>(z.data()), bound);
      while (element.size() % 8 != 0) element.push_back('\0');
    } else {
      element = std::move(matrix_el);
    }
  }

  std::string header(116, ' ');
  const std::string text = "MATLAB 5.0 MAT-file";
  std::copy(text.begin(), text.end(), header.begin());
  header.resize(124, '\0');
  header.push_back(0x00);  // version 0x0100 little-endian
  header.push_back(0x01);
  header.push_back('I');
  header.push_back('M');

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  IOTZSL_REQUIRE(f.good(), ErrKind::io, "mat5: cannot write " + path);
  f.write(header.data(), static_cast<std::streamsize>(header.size()));
  f.write(element.data(), static_cast<std::streamsize>(element.size()));
}

}  // namespace iotzsl
