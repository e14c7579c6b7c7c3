// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>

#include "isq/tensor.hpp"

namespace isq {

// Tensor blob layout, all little-endian:
//   "ISQT" | u32 dtype | u32 rank | u64 dims[rank] | row-major payload
enum class DType : std::uint32_t { F32 = 0, I8 = 1, I32 = 2 };

const char* dtype_name(DType d);
DType dtype_from_name(const std::string& name);

void write_blob(const std::filesystem::path& path, const TensorF& t);
/// Codes must fit in int8; unsigned grids above 127 are rejected.
void write_blob(const std::filesystem::path& path, const TensorQ& t);
void write_blob(const std::filesystem::path& path, const TensorAcc& t);

DType peek_blob_dtype(const std::filesystem::path& path);
TensorF read_blob_f32(const std::filesystem::path& path);
TensorQ read_blob_i8(const std::filesystem::path& path, int lo = -128, int hi = 127);
TensorAcc read_blob_i32(const std::filesystem::path& path);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& text);

/// Every file the library opens for reading is reported to the installed
/// observer. Used by tests to audit which inputs a pipeline touches.
using ReadObserver = std::function<void(const std::filesystem::path&)>;

class ScopedReadObserver {
 public:
  explicit ScopedReadObserver(ReadObserver observer);
  ~ScopedReadObserver();
  ScopedReadObserver(const ScopedReadObserver&) = delete;
  ScopedReadObserver& operator=(const ScopedReadObserver&) = delete;

 private:
  ReadObserver previous_;
};

}  // namespace isq
