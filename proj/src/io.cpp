#include "arrn/io.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "arrn/errors.hpp"

namespace arrn {

namespace {

constexpr char kArsgMagic[] = "ARSG1\n";
constexpr std::size_t kArsgMagicLen = 6;
constexpr std::uint32_t kMaxExtent = 1u << 24;

template <typename U>
void put_le(std::ostream& out, U value) {
  std::array<char, sizeof(U)> bytes{};
  for (std::size_t i = 0; i < sizeof(U); ++i) {
    bytes[i] = static_cast<char>((value >> (8 * i)) & 0xFF);
  }
  out.write(bytes.data(), bytes.size());
}

template <typename U>
U get_le(std::istream& in) {
  std::array<unsigned char, sizeof(U)> bytes{};
  in.read(reinterpret_cast<char*>(bytes.data()), bytes.size());
  if (!in) throw FormatError("unexpected end of file");
  U value = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) value |= static_cast<U>(bytes[i]) << (8 * i);
  return value;
}

}  // namespace

namespace le {
void put_u32(std::ostream& out, std::uint32_t value) { put_le(out, value); }
std::uint32_t get_u32(std::istream& in) { return get_le<std::uint32_t>(in); }
}  // namespace le

std::string dtype_name(Dtype dtype) { return dtype == Dtype::F32 ? "f32" : "f64"; }

Dtype parse_dtype(const std::string& text) {
  if (text == "f32" || text == "float32") return Dtype::F32;
  if (text == "f64" || text == "float64") return Dtype::F64;
  throw UsageError("unknown dtype '" + text + "' (expected f32 or f64)");
}

void write_arsg(std::ostream& out, const DiscreteSignal& signal, Dtype dtype) {
  out.write(kArsgMagic, kArsgMagicLen);
  const auto extents = signal.grid().extents();
  le::put_u32(out, static_cast<std::uint32_t>(extents.size()));
  for (auto e : extents) le::put_u32(out, static_cast<std::uint32_t>(e));
  le::put_u32(out, static_cast<std::uint32_t>(signal.features()));
  le::put_u32(out, static_cast<std::uint32_t>(dtype));
  for (double v : signal.values()) {
    if (dtype == Dtype::F32) {
      put_le(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
    } else {
      put_le(out, std::bit_cast<std::uint64_t>(v));
    }
  }
  if (!out) throw FormatError("failed writing ARSG payload");
}

DiscreteSignal read_arsg(std::istream& in, Dtype* dtype) {
  std::array<char, kArsgMagicLen> magic{};
  in.read(magic.data(), magic.size());
  if (!in || std::memcmp(magic.data(), kArsgMagic, kArsgMagicLen) != 0) {
    throw FormatError("bad ARSG magic");
  }
  const auto dims = le::get_u32(in);
  if (dims < 1 || dims > 2) throw FormatError("ARSG dims must be 1 or 2, got " + std::to_string(dims));
  std::vector<std::size_t> extents;
  for (std::uint32_t i = 0; i < dims; ++i) {
    const auto e = le::get_u32(in);
    if (e == 0 || e > kMaxExtent) throw FormatError("ARSG extent out of range");
    extents.push_back(e);
  }
  const auto features = le::get_u32(in);
  if (features == 0 || features > kMaxExtent) throw FormatError("ARSG feature count out of range");
  const auto code = le::get_u32(in);
  if (code > 1) throw FormatError("unknown ARSG dtype code " + std::to_string(code));
  const auto type = static_cast<Dtype>(code);
  GridSpec grid(extents);
  std::vector<double> values(grid.samples() * features);
  for (auto& v : values) {
    if (type == Dtype::F32) {
      v = static_cast<double>(std::bit_cast<float>(get_le<std::uint32_t>(in)));
    } else {
      v = std::bit_cast<double>(get_le<std::uint64_t>(in));
    }
  }
  if (in.peek() != std::char_traits<char>::eof()) throw FormatError("trailing bytes after ARSG payload");
  if (dtype) *dtype = type;
  try {
    return DiscreteSignal(grid, features, std::move(values));
  } catch (const NumericError&) {
    throw FormatError("ARSG payload contains non-finite values");
  }
}

void write_file_atomic(const std::filesystem::path& path, const std::string& contents) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + tmp.string() + " for writing");
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) throw std::runtime_error("failed writing " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

void save_arsg(const std::filesystem::path& path, const DiscreteSignal& signal, Dtype dtype) {
  std::ostringstream buffer(std::ios::binary);
  write_arsg(buffer, signal, dtype);
  write_file_atomic(path, buffer.str());
}

DiscreteSignal load_arsg(const std::filesystem::path& path, Dtype* dtype) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  return read_arsg(in, dtype);
}

}  // namespace arrn
