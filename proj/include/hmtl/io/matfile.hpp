#pragma once

// Reader for MATLAB level-5 .mat files, numeric arrays only (plain or
// zlib-compressed elements). Enough for pose-parameter files; cells,
// structs, sparse and char arrays are skipped.

#include <zlib.h>

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "hmtl/error.hpp"

namespace hmtl {

struct MatArray {
  std::vector<std::size_t> dims;
  std::vector<double> data;  // column-major, as stored
};

namespace detail::mat {

enum : std::uint32_t {
  miINT8 = 1, miUINT8 = 2, miINT16 = 3, miUINT16 = 4, miINT32 = 5, miUINT32 = 6,
  miSINGLE = 7, miDOUBLE = 9, miINT64 = 12, miUINT64 = 13, miMATRIX = 14, miCOMPRESSED = 15,
};

enum : std::uint32_t { mxSTRUCT = 2, mxCELL = 1, mxCHAR = 4, mxSPARSE = 5, mxOBJECT = 3 };

struct Cursor {
  const std::uint8_t* p;
  const std::uint8_t* end;
  const std::string* path;

  std::size_t left() const { return static_cast<std::size_t>(end - p); }

  [[noreturn]] void fail(const std::string& why) const { throw LoadError(*path, "malformed .mat file: " + why); }

  std::uint32_t u32() {
    if (left() < 4) fail("truncated");
    std::uint32_t v;
    std::memcpy(&v, p, 4);
    p += 4;
    return v;
  }
};

struct Element {
  std::uint32_t type;
  const std::uint8_t* data;
  std::size_t bytes;
};

// Reads one tag plus payload; `pad` skips the alignment to 8 bytes.
inline Element next(Cursor& c, bool pad = true) {
  const std::uint32_t first = c.u32();
  if (first >> 16) {  // small data element: type and size share the first word
    Element e{first & 0xffffu, c.p, first >> 16};
    if (c.left() < 4) c.fail("truncated small element");
    c.p += 4;
    return e;
  }
  const std::uint32_t bytes = c.u32();
  if (c.left() < bytes) c.fail("element overruns file");
  Element e{first, c.p, bytes};
  c.p += bytes;
  if (pad && first != miCOMPRESSED) {  // compressed elements carry no padding
    const std::size_t rem = bytes % 8;
    if (rem) c.p += std::min<std::size_t>(8 - rem, c.left());
  }
  return e;
}

template <typename S>
void append(std::vector<double>& out, const std::uint8_t* p, std::size_t bytes) {
  for (std::size_t i = 0; i + sizeof(S) <= bytes; i += sizeof(S)) {
    S v;
    std::memcpy(&v, p + i, sizeof(S));
    out.push_back(static_cast<double>(v));
  }
}

inline std::vector<double> numeric(const Element& e, const Cursor& c) {
  std::vector<double> out;
  switch (e.type) {
    case miINT8: append<std::int8_t>(out, e.data, e.bytes); break;
    case miUINT8: append<std::uint8_t>(out, e.data, e.bytes); break;
    case miINT16: append<std::int16_t>(out, e.data, e.bytes); break;
    case miUINT16: append<std::uint16_t>(out, e.data, e.bytes); break;
    case miINT32: append<std::int32_t>(out, e.data, e.bytes); break;
    case miUINT32: append<std::uint32_t>(out, e.data, e.bytes); break;
    case miSINGLE: append<float>(out, e.data, e.bytes); break;
    case miDOUBLE: append<double>(out, e.data, e.bytes); break;
    case miINT64: append<std::int64_t>(out, e.data, e.bytes); break;
    case miUINT64: append<std::uint64_t>(out, e.data, e.bytes); break;
    default: c.fail("unsupported numeric element type " + std::to_string(e.type));
  }
  return out;
}

inline std::vector<std::uint8_t> inflate_all(const std::uint8_t* p, std::size_t n, const std::string& path) {
  z_stream zs{};
  if (inflateInit(&zs) != Z_OK) throw LoadError(path, "zlib init failed");
  zs.next_in = const_cast<Bytef*>(p);
  zs.avail_in = static_cast<uInt>(n);
  std::vector<std::uint8_t> out;
  std::uint8_t buf[1 << 15];
  int rc = Z_OK;
  while (rc != Z_STREAM_END) {
    zs.next_out = buf;
    zs.avail_out = sizeof buf;
    rc = inflate(&zs, Z_NO_FLUSH);
    if (rc != Z_OK && rc != Z_STREAM_END) {
      inflateEnd(&zs);
      throw LoadError(path, "corrupt compressed element");
    }
    out.insert(out.end(), buf, buf + (sizeof buf - zs.avail_out));
    if (rc == Z_OK && zs.avail_in == 0 && zs.avail_out != 0) break;  // truncated stream
  }
  inflateEnd(&zs);
  return out;
}

inline void read_matrix(const Element& m, const std::string& path, std::map<std::string, MatArray>& vars) {
  Cursor c{m.data, m.data + m.bytes, &path};
  const Element flags = next(c);
  if (flags.bytes < 8) c.fail("array flags too short");
  std::uint32_t f0;
  std::memcpy(&f0, flags.data, 4);
  const std::uint32_t cls = f0 & 0xffu;
  const bool complex = (f0 & 0x0800u) != 0;
  const Element dims = next(c);
  const Element name = next(c);
  std::string var(reinterpret_cast<const char*>(name.data), name.bytes);
  if (cls == mxSTRUCT || cls == mxCELL || cls == mxCHAR || cls == mxSPARSE || cls == mxOBJECT || cls > 15) return;
  MatArray a;
  for (double d : numeric(dims, c)) a.dims.push_back(static_cast<std::size_t>(d));
  a.data = numeric(next(c), c);
  (void)complex;  // imaginary part, if any, is ignored
  std::size_t expect = 1;
  for (auto d : a.dims) expect *= d;
  if (a.data.size() != expect) c.fail("variable '" + var + "' has " + std::to_string(a.data.size()) + " values for its dimensions");
  vars[var] = std::move(a);
}

}  // namespace detail::mat

/// Every numeric variable of a level-5 .mat file, converted to double.
inline std::map<std::string, MatArray> read_mat_file(const std::filesystem::path& path) {
  const std::string ps = path.string();
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError(ps, "cannot open .mat file");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() < 128) throw LoadError(ps, "not a MATLAB level-5 file (too short)");
  if (!(bytes[126] == 'I' && bytes[127] == 'M'))
    throw LoadError(ps, "unsupported .mat byte order or version (only little-endian level 5)");
  using namespace detail::mat;
  std::map<std::string, MatArray> vars;
  Cursor c{bytes.data() + 128, bytes.data() + bytes.size(), &ps};
  while (c.left() >= 8) {
    const Element e = next(c, true);
    if (e.type == miCOMPRESSED) {
      const auto raw = inflate_all(e.data, e.bytes, ps);
      Cursor inner{raw.data(), raw.data() + raw.size(), &ps};
      const Element m = next(inner);
      if (m.type == miMATRIX) read_matrix(m, ps, vars);
    } else if (e.type == miMATRIX) {
      read_matrix(e, ps, vars);
    }
  }
  return vars;
}

}  // namespace hmtl
