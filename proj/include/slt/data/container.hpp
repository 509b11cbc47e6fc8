#pragma once

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>
#include <type_traits>
#include <vector>

#include "slt/core/errors.hpp"
#include "slt/core/json_util.hpp"

namespace slt::data {

inline constexpr char kMagic[4] = {'S', 'L', 'T', 'D'};
inline constexpr std::uint32_t kFormatVersion = 1;

enum class Kind : std::uint32_t { zonal_record = 1, spectral_checkpoint = 2, model_checkpoint = 3, forecast = 4 };
enum class DType : std::uint32_t { f32 = 1, f64 = 2 };

inline const char* kind_name(Kind k) {
  switch (k) {
    case Kind::zonal_record: return "zonal-record";
    case Kind::spectral_checkpoint: return "spectral-checkpoint";
    case Kind::model_checkpoint: return "model-checkpoint";
    case Kind::forecast: return "forecast";
  }
  return "unknown";
}

/// Named dense array. Values are held in double precision in memory; the
/// container dtype only decides the on-disk width.
struct Array {
  std::string name;
  std::vector<std::uint64_t> shape;
  std::vector<double> values;

  std::uint64_t count() const {
    std::uint64_t n = 1;
    for (auto d : shape) n *= d;
    return n;
  }
};

/// One file: fixed header, JSON metadata, then arrays.
struct Container {
  Kind kind = Kind::zonal_record;
  DType dtype = DType::f64;
  double record_interval = 1.0;
  double norm_mean = 0.0;
  double norm_std = 1.0;
  std::uint64_t seed = 0;
  json meta = json::object();
  std::vector<Array> arrays;

  const Array& array(const std::string& name) const {
    for (const auto& a : arrays)
      if (a.name == name) return a;
    throw CorruptHeader("container: missing array '" + name + "'");
  }
  bool has(const std::string& name) const {
    for (const auto& a : arrays)
      if (a.name == name) return true;
    return false;
  }
  Array& add(std::string name, std::vector<std::uint64_t> shape, std::vector<double> values) {
    Array a{std::move(name), std::move(shape), std::move(values)};
    if (a.count() != a.values.size()) throw ShapeError("container: array '" + a.name + "' shape/value mismatch");
    arrays.push_back(std::move(a));
    return arrays.back();
  }
};

namespace detail {

// Little-endian encode/decode independent of host order.
template <class T>
void put(std::string& out, T v) {
  static_assert(std::is_trivially_copyable_v<T>);
  char b[sizeof(T)];
  std::memcpy(b, &v, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(b, b + sizeof(T));
  out.append(b, sizeof(T));
}

class Reader {
 public:
  Reader(const std::string& buf, std::string what) : buf_(buf), what_(std::move(what)) {}

  template <class T>
  T get(const char* field) {
    need(sizeof(T), field);
    char b[sizeof(T)];
    std::memcpy(b, buf_.data() + pos_, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(b, b + sizeof(T));
    pos_ += sizeof(T);
    T v;
    std::memcpy(&v, b, sizeof(T));
    return v;
  }
  std::string bytes(std::uint64_t n, const char* field) {
    need(n, field);
    std::string s = buf_.substr(pos_, std::size_t(n));
    pos_ += std::size_t(n);
    return s;
  }
  void need(std::uint64_t n, const char* field) const {
    if (n > buf_.size() - pos_)
      throw TruncatedPayload(what_ + ": file ends inside " + field + " (need " + std::to_string(n) + " bytes, have " +
                             std::to_string(buf_.size() - pos_) + ")");
  }
  bool done() const { return pos_ == buf_.size(); }

 private:
  const std::string& buf_;
  std::string what_;
  std::size_t pos_ = 0;
};

// FNV-1a over the encoded payload bytes of one array.
inline std::uint64_t fnv1a(const char* p, std::size_t n) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::size_t i = 0; i < n; ++i) {
    h ^= std::uint8_t(p[i]);
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace detail

/// Serializes to bytes; layout is documented in docs/container_format.md.
inline std::string encode(const Container& c) {
  using detail::put;
  std::string out(kMagic, 4);
  put(out, kFormatVersion);
  put(out, std::uint32_t(c.kind));
  put(out, std::uint32_t(c.dtype));
  put(out, c.record_interval);
  put(out, c.norm_mean);
  put(out, c.norm_std);
  put(out, c.seed);
  const std::string meta = c.meta.dump();
  put(out, std::uint64_t(meta.size()));
  out += meta;
  put(out, std::uint32_t(c.arrays.size()));
  for (const auto& a : c.arrays) {
    if (a.count() != a.values.size()) throw ShapeError("container: array '" + a.name + "' shape/value mismatch");
    put(out, std::uint32_t(a.name.size()));
    out += a.name;
    put(out, std::uint32_t(a.shape.size()));
    for (auto d : a.shape) put(out, d);
    std::string payload;
    payload.reserve(a.values.size() * (c.dtype == DType::f32 ? 4 : 8));
    for (double v : a.values) {
      if (c.dtype == DType::f32)
        put(payload, float(v));
      else
        put(payload, v);
    }
    put(out, std::uint64_t(payload.size()));
    put(out, detail::fnv1a(payload.data(), payload.size()));
    out += payload;
  }
  return out;
}

/// Parses bytes; the header is validated before any payload is touched.
inline Container decode(const std::string& buf, const std::string& what = "container") {
  detail::Reader r(buf, what);
  if (buf.size() < 4 || std::memcmp(buf.data(), kMagic, 4) != 0) {
    if (buf.size() < 4 && std::memcmp(buf.data(), kMagic, buf.size()) == 0)
      throw TruncatedPayload(what + ": file ends inside magic");
    throw BadMagic(what + ": not an SLTD file");
  }
  r.bytes(4, "magic");
  const auto version = r.get<std::uint32_t>("version");
  if (version != kFormatVersion)
    throw UnsupportedVersion(what + ": format version " + std::to_string(version) + ", expected " +
                             std::to_string(kFormatVersion));
  Container c;
  const auto kind = r.get<std::uint32_t>("kind");
  if (kind < 1 || kind > 4) throw CorruptHeader(what + ": unknown kind tag " + std::to_string(kind));
  c.kind = Kind(kind);
  const auto dtype = r.get<std::uint32_t>("dtype");
  if (dtype != 1 && dtype != 2) throw CorruptHeader(what + ": unknown dtype tag " + std::to_string(dtype));
  c.dtype = DType(dtype);
  c.record_interval = r.get<double>("record_interval");
  c.norm_mean = r.get<double>("norm_mean");
  c.norm_std = r.get<double>("norm_std");
  c.seed = r.get<std::uint64_t>("seed");
  const auto meta_len = r.get<std::uint64_t>("metadata length");
  const std::string meta = r.bytes(meta_len, "metadata");
  try {
    c.meta = json::parse(meta);
  } catch (const json::exception& e) {
    throw CorruptHeader(what + ": metadata is not valid JSON");
  }
  const auto n = r.get<std::uint32_t>("array count");
  const std::size_t width = c.dtype == DType::f32 ? 4 : 8;
  for (std::uint32_t i = 0; i < n; ++i) {
    Array a;
    a.name = r.bytes(r.get<std::uint32_t>("array name length"), "array name");
    const auto rank = r.get<std::uint32_t>("array rank");
    if (rank > 8) throw CorruptHeader(what + ": array '" + a.name + "' has rank " + std::to_string(rank));
    for (std::uint32_t d = 0; d < rank; ++d) a.shape.push_back(r.get<std::uint64_t>("array shape"));
    const auto bytes = r.get<std::uint64_t>("payload length");
    const auto sum = r.get<std::uint64_t>("payload checksum");
    const auto count = a.count();
    if (count > (std::uint64_t(1) << 40) || bytes != count * width)
      throw CorruptHeader(what + ": array '" + a.name + "' payload length disagrees with its shape");
    const std::string payload = r.bytes(bytes, "array payload");
    if (detail::fnv1a(payload.data(), payload.size()) != sum)
      throw CorruptHeader(what + ": checksum mismatch in array '" + a.name + "'");
    detail::Reader pr(payload, what);
    a.values.resize(std::size_t(count));
    for (auto& v : a.values) v = c.dtype == DType::f32 ? double(pr.get<float>("value")) : pr.get<double>("value");
    c.arrays.push_back(std::move(a));
  }
  if (!r.done()) throw CorruptHeader(what + ": trailing bytes after last array");
  return c;
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  return std::string(std::istreambuf_iterator<char>(in), {});
}

/// Writes via `<path>.partial` and renames, so a failed write never leaves a
/// file that looks complete.
inline void write_file(const std::filesystem::path& path, const std::string& bytes) {
  auto tmp = path;
  tmp += ".partial";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + tmp.string() + "' for writing");
    out.write(bytes.data(), std::streamsize(bytes.size()));
    if (!out) throw IoError("write failed for '" + tmp.string() + "'");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot rename '" + tmp.string() + "': " + ec.message());
}

inline void save(const std::filesystem::path& path, const Container& c) { write_file(path, encode(c)); }

inline Container load(const std::filesystem::path& path) { return decode(read_file(path), path.string()); }

/// Long-form CSV of every array: array,i0,...,i{r-1},value. Columns beyond an
/// array's rank are left empty.
inline void export_csv(const Container& c, std::ostream& out) {
  std::size_t rank = 0;
  for (const auto& a : c.arrays) rank = std::max(rank, a.shape.size());
  out << "array";
  for (std::size_t d = 0; d < rank; ++d) out << ",i" << d;
  out << ",value\n";
  out.precision(17);
  for (const auto& a : c.arrays) {
    std::vector<std::uint64_t> idx(a.shape.size(), 0);
    for (double v : a.values) {
      out << a.name;
      for (std::size_t d = 0; d < rank; ++d) {
        out << ',';
        if (d < idx.size()) out << idx[d];
      }
      out << ',' << v << '\n';
      for (std::size_t d = idx.size(); d-- > 0;) {
        if (++idx[d] < a.shape[d]) break;
        idx[d] = 0;
      }
    }
  }
}

}  // namespace slt::data
