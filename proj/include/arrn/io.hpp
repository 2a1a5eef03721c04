#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>

#include "arrn/signal.hpp"

namespace arrn {

enum class Dtype : std::uint32_t { F32 = 0, F64 = 1 };

std::string dtype_name(Dtype dtype);
Dtype parse_dtype(const std::string& text);

/// ARSG container: "ARSG1\n", then little-endian u32 dims, extents[dims], features,
/// dtype code, then raw IEEE values in feature-major layout.
void write_arsg(std::ostream& out, const DiscreteSignal& signal, Dtype dtype);
DiscreteSignal read_arsg(std::istream& in, Dtype* dtype = nullptr);

void save_arsg(const std::filesystem::path& path, const DiscreteSignal& signal, Dtype dtype);
DiscreteSignal load_arsg(const std::filesystem::path& path, Dtype* dtype = nullptr);

/// Writes `contents` to a sibling temporary file and renames it over `path`.
void write_file_atomic(const std::filesystem::path& path, const std::string& contents);

namespace le {
void put_u32(std::ostream& out, std::uint32_t value);
std::uint32_t get_u32(std::istream& in);
}  // namespace le

}  // namespace arrn
