// SPDX-License-Identifier: Apache-2.0
#include "isq/blob_io.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <mutex>
#include <sstream>

#include "isq/error.hpp"

namespace isq {
namespace {

constexpr std::array<char, 4> kMagic = {'I', 'S', 'Q', 'T'};
constexpr std::uint32_t kMaxRank = 8;

static_assert(std::endian::native == std::endian::little, "blob I/O assumes a little-endian host");

std::mutex& observer_mutex() {
  static std::mutex m;
  return m;
}

ReadObserver& observer_slot() {
  static ReadObserver obs;
  return obs;
}

void notify_read(const std::filesystem::path& path) {
  std::lock_guard lock(observer_mutex());
  if (observer_slot()) observer_slot()(path);
}

std::ifstream open_for_read(const std::filesystem::path& path) {
  notify_read(path);
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("io.not_found", "cannot open '" + path.string() + "'");
  return in;
}

template <typename T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& in, const std::filesystem::path& path) {
  T v{};
  if (!in.read(reinterpret_cast<char*>(&v), sizeof(T))) {
    throw Error("io.truncated_blob", "'" + path.string() + "' ends inside the header");
  }
  return v;
}

template <typename T>
void write_impl(const std::filesystem::path& path, DType dtype, const Shape& shape, std::span<const T> payload) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("io.write_failed", "cannot open '" + path.string() + "' for writing");
  out.write(kMagic.data(), kMagic.size());
  put<std::uint32_t>(out, static_cast<std::uint32_t>(dtype));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(shape.rank()));
  for (auto d : shape.dims()) put<std::uint64_t>(out, static_cast<std::uint64_t>(d));
  out.write(reinterpret_cast<const char*>(payload.data()), static_cast<std::streamsize>(payload.size_bytes()));
  if (!out) throw Error("io.write_failed", "short write to '" + path.string() + "'");
}

struct Header {
  DType dtype;
  Shape shape;
};

Header read_header(std::istream& in, const std::filesystem::path& path) {
  std::array<char, 4> magic{};
  if (!in.read(magic.data(), magic.size())) {
    throw Error("io.truncated_blob", "'" + path.string() + "' is shorter than a blob header");
  }
  if (magic != kMagic) {
    throw Error("io.bad_magic", "'" + path.string() + "' is not a tensor blob");
  }
  auto code = get<std::uint32_t>(in, path);
  if (code > 2) throw Error("io.bad_dtype", "'" + path.string() + "' has dtype code " + std::to_string(code));
  auto rank = get<std::uint32_t>(in, path);
  if (rank == 0 || rank > kMaxRank) {
    throw Error("io.bad_rank", "'" + path.string() + "' has rank " + std::to_string(rank));
  }
  std::vector<std::int64_t> dims;
  for (std::uint32_t i = 0; i < rank; ++i) {
    auto d = get<std::uint64_t>(in, path);
    if (d == 0 || d > (1ULL << 31)) throw Error("io.bad_shape", "'" + path.string() + "' has dim " + std::to_string(d));
    dims.push_back(static_cast<std::int64_t>(d));
  }
  return {static_cast<DType>(code), Shape(std::move(dims))};
}

template <typename T>
std::vector<T> read_payload(std::istream& in, const Shape& shape, const std::filesystem::path& path) {
  std::vector<T> data(static_cast<std::size_t>(shape.numel()));
  if (!in.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(data.size() * sizeof(T)))) {
    throw Error("io.truncated_blob", "'" + path.string() + "' payload shorter than " + shape.str());
  }
  if (in.peek() != std::char_traits<char>::eof()) {
    throw Error("io.trailing_bytes", "'" + path.string() + "' has bytes after the payload");
  }
  return data;
}

Header expect(std::istream& in, const std::filesystem::path& path, DType want) {
  auto h = read_header(in, path);
  if (h.dtype != want) {
    throw Error("io.dtype_mismatch", "'" + path.string() + "' holds " + dtype_name(h.dtype) + ", expected " +
                                         dtype_name(want));
  }
  return h;
}

}  // namespace

const char* dtype_name(DType d) {
  switch (d) {
    case DType::F32: return "f32";
    case DType::I8: return "i8";
    case DType::I32: return "i32";
  }
  return "?";
}

DType dtype_from_name(const std::string& name) {
  if (name == "f32") return DType::F32;
  if (name == "i8") return DType::I8;
  if (name == "i32") return DType::I32;
  throw Error("io.bad_dtype", "unknown dtype '" + name + "'");
}

void write_blob(const std::filesystem::path& path, const TensorF& t) {
  write_impl<float>(path, DType::F32, t.shape(), t.data());
}

void write_blob(const std::filesystem::path& path, const TensorQ& t) {
  std::vector<std::int8_t> bytes(t.data().size());
  for (std::size_t i = 0; i < bytes.size(); ++i) {
    auto v = t.data()[i];
    if (v < -128 || v > 127) throw Error("io.not_int8", "code " + std::to_string(v) + " does not fit an i8 blob");
    bytes[i] = static_cast<std::int8_t>(v);
  }
  write_impl<std::int8_t>(path, DType::I8, t.shape(), bytes);
}

void write_blob(const std::filesystem::path& path, const TensorAcc& t) {
  write_impl<std::int32_t>(path, DType::I32, t.shape(), t.data());
}

DType peek_blob_dtype(const std::filesystem::path& path) {
  auto in = open_for_read(path);
  return read_header(in, path).dtype;
}

TensorF read_blob_f32(const std::filesystem::path& path) {
  auto in = open_for_read(path);
  auto h = expect(in, path, DType::F32);
  auto data = read_payload<float>(in, h.shape, path);
  return TensorF(std::move(h.shape), std::move(data));
}

TensorQ read_blob_i8(const std::filesystem::path& path, int lo, int hi) {
  auto in = open_for_read(path);
  auto h = expect(in, path, DType::I8);
  auto raw = read_payload<std::int8_t>(in, h.shape, path);
  return TensorQ(std::move(h.shape), std::vector<std::int16_t>(raw.begin(), raw.end()), lo, hi);
}

TensorAcc read_blob_i32(const std::filesystem::path& path) {
  auto in = open_for_read(path);
  auto h = expect(in, path, DType::I32);
  auto data = read_payload<std::int32_t>(in, h.shape, path);
  return TensorAcc(std::move(h.shape), std::move(data));
}

std::string read_text_file(const std::filesystem::path& path) {
  auto in = open_for_read(path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("io.write_failed", "cannot open '" + path.string() + "' for writing");
  out << text;
  if (!out) throw Error("io.write_failed", "short write to '" + path.string() + "'");
}

ScopedReadObserver::ScopedReadObserver(ReadObserver observer) {
  std::lock_guard lock(observer_mutex());
  previous_ = std::exchange(observer_slot(), std::move(observer));
}

ScopedReadObserver::~ScopedReadObserver() {
  std::lock_guard lock(observer_mutex());
  observer_slot() = std::move(previous_);
}

}  // namespace isq
