#pragma once

// NIfTI-1 single-file (.nii / .nii.gz) reading and writing, plus slicing of
// volumes into 2D images.
//
// Only the fields the pipeline needs are decoded. sform/qform are parsed for
// inspection but never applied: slicing works in voxel index space.

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include <zlib.h>

#include "mrens/error.hpp"

namespace mrens {

inline constexpr std::int32_t kNiftiHeaderSize = 348;
inline constexpr std::int32_t kNiftiVoxOffset = 352;

enum class Endianness { little, big };

// NIfTI-1 datatype codes accepted by this reader.
enum class Datatype : std::int16_t {
  uint8 = 2,
  int16 = 4,
  int32 = 8,
  float32 = 16,
  float64 = 64,
};

constexpr std::size_t bytes_per_voxel(Datatype t) noexcept {
  switch (t) {
    case Datatype::uint8: return 1;
    case Datatype::int16: return 2;
    case Datatype::int32: return 4;
    case Datatype::float32: return 4;
    case Datatype::float64: return 8;
  }
  return 0;
}

constexpr bool is_integer(Datatype t) noexcept {
  return t == Datatype::uint8 || t == Datatype::int16 || t == Datatype::int32;
}

inline constexpr std::array<Datatype, 5> kSupportedDatatypes{
    Datatype::uint8, Datatype::int16, Datatype::int32, Datatype::float32, Datatype::float64};

inline bool is_supported_datatype(std::int32_t code) {
  return std::ranges::any_of(kSupportedDatatypes,
                             [code](Datatype t) { return static_cast<std::int32_t>(t) == code; });
}

inline Datatype datatype_from_name(const std::string& name) {
  if (name == "uint8") return Datatype::uint8;
  if (name == "int16") return Datatype::int16;
  if (name == "int32") return Datatype::int32;
  if (name == "float32") return Datatype::float32;
  if (name == "float64") return Datatype::float64;
  throw Error("volume_io", "UnsupportedDatatype", "unknown datatype name '" + name + "'");
}

inline std::string datatype_name(Datatype t) {
  switch (t) {
    case Datatype::uint8: return "uint8";
    case Datatype::int16: return "int16";
    case Datatype::int32: return "int32";
    case Datatype::float32: return "float32";
    case Datatype::float64: return "float64";
  }
  return "unknown";
}

struct NiftiHeader {
  std::int32_t sizeof_hdr = kNiftiHeaderSize;
  std::array<std::int16_t, 8> dim{};
  Datatype datatype = Datatype::float32;
  std::int16_t bitpix = 32;
  std::array<float, 8> pixdim{};
  float vox_offset = static_cast<float>(kNiftiVoxOffset);
  float scl_slope = 1.0f;
  float scl_inter = 0.0f;
  std::int16_t qform_code = 0;
  std::int16_t sform_code = 0;
  std::array<std::array<float, 4>, 3> srow{};
  std::array<char, 4> magic{'n', '+', '1', '\0'};
  Endianness endianness = Endianness::little;

  friend bool operator==(const NiftiHeader&, const NiftiHeader&) = default;
};

struct Extents {
  std::size_t nx = 0;
  std::size_t ny = 0;
  std::size_t nz = 0;

  std::size_t voxel_count() const noexcept { return nx * ny * nz; }
  friend bool operator==(const Extents&, const Extents&) = default;
};

// A 3D intensity grid, x fastest. Scaling from the file header has already
// been applied to the stored values.
class Volume {
public:
  Volume(Extents extents, std::array<double, 3> voxel_size_mm, std::vector<double> data,
         std::string source_id = {})
      : extents_(extents), voxel_size_mm_(voxel_size_mm), data_(std::move(data)),
        source_id_(std::move(source_id)) {
    if (extents_.nx == 0 || extents_.ny == 0 || extents_.nz == 0) {
      throw Error("volume_io", "InvalidVolume", "every extent must be at least 1");
    }
    if (data_.size() != extents_.voxel_count()) {
      throw Error("volume_io", "InvalidVolume", "data length does not match extents");
    }
    if (!std::ranges::all_of(data_, [](double v) { return std::isfinite(v); })) {
      throw Error("volume_io", "InvalidVolume", "volume contains non-finite intensities");
    }
  }

  const Extents& extents() const noexcept { return extents_; }
  const std::array<double, 3>& voxel_size_mm() const noexcept { return voxel_size_mm_; }
  const std::vector<double>& data() const noexcept { return data_; }
  const std::string& source_id() const noexcept { return source_id_; }

  std::size_t offset(std::size_t x, std::size_t y, std::size_t z) const noexcept {
    return x + extents_.nx * (y + extents_.ny * z);
  }
  double at(std::size_t x, std::size_t y, std::size_t z) const { return data_[offset(x, y, z)]; }

private:
  Extents extents_;
  std::array<double, 3> voxel_size_mm_;
  std::vector<double> data_;
  std::string source_id_;
};

// A 2D image, row-major.
class Slice {
public:
  Slice(std::size_t height, std::size_t width, std::vector<double> pixels, std::size_t index = 0,
        std::string scan_id = {})
      : height_(height), width_(width), pixels_(std::move(pixels)), index_(index),
        scan_id_(std::move(scan_id)) {
    if (pixels_.size() != height_ * width_) {
      throw Error("volume_io", "InvalidSlice", "pixel count does not match height*width");
    }
    if (!std::ranges::all_of(pixels_, [](double v) { return std::isfinite(v); })) {
      throw Error("volume_io", "InvalidSlice", "slice contains non-finite pixels");
    }
  }

  std::size_t height() const noexcept { return height_; }
  std::size_t width() const noexcept { return width_; }
  std::size_t index() const noexcept { return index_; }
  const std::string& scan_id() const noexcept { return scan_id_; }
  const std::vector<double>& pixels() const noexcept { return pixels_; }
  double at(std::size_t r, std::size_t c) const { return pixels_[r * width_ + c]; }

  friend bool operator==(const Slice&, const Slice&) = default;

private:
  std::size_t height_;
  std::size_t width_;
  std::vector<double> pixels_;
  std::size_t index_;
  std::string scan_id_;
};

enum class Axis { x = 0, y = 1, z = 2 };

inline Axis axis_from_name(const std::string& name) {
  if (name == "x") return Axis::x;
  if (name == "y") return Axis::y;
  if (name == "z") return Axis::z;
  throw Error("volume_io", "BadAxis", "axis must be x, y or z, got '" + name + "'");
}

namespace detail {

inline constexpr Endianness native_endianness() {
  return std::endian::native == std::endian::little ? Endianness::little : Endianness::big;
}

template <typename T>
T read_scalar(std::span<const std::uint8_t> bytes, std::size_t offset, Endianness order) {
  std::array<std::uint8_t, sizeof(T)> raw;
  std::memcpy(raw.data(), bytes.data() + offset, sizeof(T));
  if (order != native_endianness()) std::ranges::reverse(raw);
  T value;
  std::memcpy(&value, raw.data(), sizeof(T));
  return value;
}

template <typename T>
void write_scalar(std::vector<std::uint8_t>& out, std::size_t offset, T value, Endianness order) {
  std::array<std::uint8_t, sizeof(T)> raw;
  std::memcpy(raw.data(), &value, sizeof(T));
  if (order != native_endianness()) std::ranges::reverse(raw);
  std::memcpy(out.data() + offset, raw.data(), sizeof(T));
}

// Header field offsets in the 348-byte NIfTI-1 layout.
namespace off {
inline constexpr std::size_t sizeof_hdr = 0;
inline constexpr std::size_t dim = 40;
inline constexpr std::size_t datatype = 70;
inline constexpr std::size_t bitpix = 72;
inline constexpr std::size_t pixdim = 76;
inline constexpr std::size_t vox_offset = 108;
inline constexpr std::size_t scl_slope = 112;
inline constexpr std::size_t scl_inter = 116;
inline constexpr std::size_t xyzt_units = 123;
inline constexpr std::size_t qform_code = 252;
inline constexpr std::size_t sform_code = 254;
inline constexpr std::size_t srow_x = 280;
inline constexpr std::size_t magic = 344;
}  // namespace off

inline bool is_gzip(std::span<const std::uint8_t> bytes) {
  return bytes.size() >= 2 && bytes[0] == 0x1f && bytes[1] == 0x8b;
}

inline std::vector<std::uint8_t> gunzip(std::span<const std::uint8_t> bytes) {
  z_stream strm{};
  if (inflateInit2(&strm, 16 + MAX_WBITS) != Z_OK) {
    throw Error("volume_io", "BadGzip", "cannot initialise gzip decoder");
  }
  strm.next_in = const_cast<Bytef*>(bytes.data());
  strm.avail_in = static_cast<uInt>(bytes.size());
  std::vector<std::uint8_t> out;
  std::array<std::uint8_t, 1 << 16> chunk;
  int rc = Z_OK;
  while (rc != Z_STREAM_END) {
    strm.next_out = chunk.data();
    strm.avail_out = static_cast<uInt>(chunk.size());
    rc = inflate(&strm, Z_NO_FLUSH);
    if (rc != Z_OK && rc != Z_STREAM_END) {
      inflateEnd(&strm);
      throw Error("volume_io", "BadGzip", "corrupt gzip stream");
    }
    out.insert(out.end(), chunk.data(), chunk.data() + (chunk.size() - strm.avail_out));
    if (rc == Z_OK && strm.avail_in == 0 && strm.avail_out != 0) {
      inflateEnd(&strm);
      throw Error("volume_io", "BadGzip", "truncated gzip stream");
    }
  }
  inflateEnd(&strm);
  return out;
}

template <typename T>
T checked_integer(double v, Datatype t) {
  const double r = std::nearbyint(v);
  if (r < static_cast<double>(std::numeric_limits<T>::min()) ||
      r > static_cast<double>(std::numeric_limits<T>::max())) {
    throw Error("volume_io", "ValueOutOfRange",
                "intensity " + std::to_string(v) + " does not fit datatype " + datatype_name(t));
  }
  return static_cast<T>(r);
}

}  // namespace detail

// Decodes the fixed 348-byte header. The byte order is whichever makes
// sizeof_hdr read as 348.
inline NiftiHeader parse_header(std::span<const std::uint8_t> bytes) {
  using detail::read_scalar;
  namespace off = detail::off;
  if (bytes.size() < static_cast<std::size_t>(kNiftiHeaderSize)) {
    throw Error("volume_io", "TooShort",
                "header needs 348 bytes, got " + std::to_string(bytes.size()));
  }

  NiftiHeader h;
  const Endianness native = detail::native_endianness();
  const Endianness swapped = native == Endianness::little ? Endianness::big : Endianness::little;
  if (read_scalar<std::int32_t>(bytes, off::sizeof_hdr, native) == kNiftiHeaderSize) {
    h.endianness = native;
  } else if (read_scalar<std::int32_t>(bytes, off::sizeof_hdr, swapped) == kNiftiHeaderSize) {
    h.endianness = swapped;
  } else {
    throw Error("volume_io", "BadSize", "sizeof_hdr is not 348 in either byte order");
  }
  const Endianness e = h.endianness;

  std::memcpy(h.magic.data(), bytes.data() + off::magic, 4);
  if (h.magic != std::array<char, 4>{'n', '+', '1', '\0'}) {
    throw Error("volume_io", "BadMagic", "expected single-file magic \"n+1\"");
  }

  for (std::size_t i = 0; i < 8; ++i) {
    h.dim[i] = read_scalar<std::int16_t>(bytes, off::dim + 2 * i, e);
    h.pixdim[i] = read_scalar<float>(bytes, off::pixdim + 4 * i, e);
  }
  if (h.dim[0] < 1 || h.dim[0] > 7) {
    throw Error("volume_io", "BadDim", "dim[0] must be in 1..7, got " + std::to_string(h.dim[0]));
  }
  for (int i = 1; i <= h.dim[0]; ++i) {
    if (h.dim[i] < 1) {
      throw Error("volume_io", "BadDim", "dim[" + std::to_string(i) + "] must be >= 1");
    }
  }

  const auto code = read_scalar<std::int16_t>(bytes, off::datatype, e);
  if (!is_supported_datatype(code)) {
    throw Error("volume_io", "UnsupportedDatatype", "datatype code " + std::to_string(code));
  }
  h.datatype = static_cast<Datatype>(code);
  h.bitpix = read_scalar<std::int16_t>(bytes, off::bitpix, e);
  h.vox_offset = read_scalar<float>(bytes, off::vox_offset, e);
  if (!(h.vox_offset >= static_cast<float>(kNiftiHeaderSize))) {
    throw Error("volume_io", "BadOffset", "vox_offset must be >= 348 for single-file volumes");
  }
  h.scl_slope = read_scalar<float>(bytes, off::scl_slope, e);
  h.scl_inter = read_scalar<float>(bytes, off::scl_inter, e);
  h.qform_code = read_scalar<std::int16_t>(bytes, off::qform_code, e);
  h.sform_code = read_scalar<std::int16_t>(bytes, off::sform_code, e);
  for (std::size_t r = 0; r < 3; ++r) {
    for (std::size_t c = 0; c < 4; ++c) {
      h.srow[r][c] = read_scalar<float>(bytes, off::srow_x + 16 * r + 4 * c, e);
    }
  }
  return h;
}

// Serialises a volume as a single-file NIfTI-1 stream (vox_offset 352, unit
// scaling). Integer datatypes round to nearest and reject out-of-range values.
inline std::vector<std::uint8_t> write_volume(const Volume& volume, Datatype datatype,
                                              Endianness order = Endianness::little) {
  using detail::write_scalar;
  namespace off = detail::off;
  if (!is_supported_datatype(static_cast<std::int32_t>(datatype))) {
    throw Error("volume_io", "UnsupportedDatatype",
                "datatype code " + std::to_string(static_cast<int>(datatype)));
  }
  const auto& ext = volume.extents();
  for (std::size_t n : {ext.nx, ext.ny, ext.nz}) {
    if (n > static_cast<std::size_t>(std::numeric_limits<std::int16_t>::max())) {
      throw Error("volume_io", "BadDim", "extent exceeds the NIfTI-1 limit of 32767");
    }
  }

  const std::size_t bpv = bytes_per_voxel(datatype);
  std::vector<std::uint8_t> out(static_cast<std::size_t>(kNiftiVoxOffset) + ext.voxel_count() * bpv, 0);

  write_scalar<std::int32_t>(out, off::sizeof_hdr, kNiftiHeaderSize, order);
  const std::array<std::int16_t, 8> dim{3,
                                        static_cast<std::int16_t>(ext.nx),
                                        static_cast<std::int16_t>(ext.ny),
                                        static_cast<std::int16_t>(ext.nz),
                                        1, 1, 1, 1};
  const auto& vs = volume.voxel_size_mm();
  const std::array<float, 8> pixdim{1.0f, static_cast<float>(vs[0]), static_cast<float>(vs[1]),
                                    static_cast<float>(vs[2]), 0.0f, 0.0f, 0.0f, 0.0f};
  for (std::size_t i = 0; i < 8; ++i) {
    write_scalar<std::int16_t>(out, off::dim + 2 * i, dim[i], order);
    write_scalar<float>(out, off::pixdim + 4 * i, pixdim[i], order);
  }
  write_scalar<std::int16_t>(out, off::datatype, static_cast<std::int16_t>(datatype), order);
  write_scalar<std::int16_t>(out, off::bitpix, static_cast<std::int16_t>(8 * bpv), order);
  write_scalar<float>(out, off::vox_offset, static_cast<float>(kNiftiVoxOffset), order);
  write_scalar<float>(out, off::scl_slope, 1.0f, order);
  write_scalar<float>(out, off::scl_inter, 0.0f, order);
  out[off::xyzt_units] = 2;  // millimetres
  std::memcpy(out.data() + off::magic, "n+1\0", 4);

  std::size_t pos = kNiftiVoxOffset;
  for (double v : volume.data()) {
    switch (datatype) {
      case Datatype::uint8:
        out[pos] = detail::checked_integer<std::uint8_t>(v, datatype);
        break;
      case Datatype::int16:
        write_scalar<std::int16_t>(out, pos, detail::checked_integer<std::int16_t>(v, datatype), order);
        break;
      case Datatype::int32:
        write_scalar<std::int32_t>(out, pos, detail::checked_integer<std::int32_t>(v, datatype), order);
        break;
      case Datatype::float32:
        write_scalar<float>(out, pos, static_cast<float>(v), order);
        break;
      case Datatype::float64:
        write_scalar<double>(out, pos, v, order);
        break;
    }
    pos += bpv;
  }
  return out;
}

// Decodes a complete (already decompressed or gzip) NIfTI-1 stream.
inline Volume decode_volume(std::span<const std::uint8_t> stream, std::string source_id = {}) {
  std::vector<std::uint8_t> inflated;
  if (detail::is_gzip(stream)) {
    inflated = detail::gunzip(stream);
    stream = inflated;
  }
  const NiftiHeader h = parse_header(stream);
  for (int i = 4; i <= h.dim[0]; ++i) {
    if (h.dim[i] > 1) {
      throw Error("volume_io", "Unsupported4D",
                  "dim[" + std::to_string(i) + "] = " + std::to_string(h.dim[i]) + " (only 3D data is read)");
    }
  }
  const Extents ext{static_cast<std::size_t>(h.dim[1]),
                    h.dim[0] >= 2 ? static_cast<std::size_t>(h.dim[2]) : 1,
                    h.dim[0] >= 3 ? static_cast<std::size_t>(h.dim[3]) : 1};

  const std::size_t bpv = bytes_per_voxel(h.datatype);
  const auto start = static_cast<std::size_t>(h.vox_offset);
  const std::size_t need = ext.voxel_count() * bpv;
  if (stream.size() < start || stream.size() - start < need) {
    throw Error("volume_io", "TruncatedData",
                "payload needs " + std::to_string(need) + " bytes after offset " + std::to_string(start));
  }

  // scl_slope == 0 means the intensities are stored unscaled.
  const bool scaled = h.scl_slope != 0.0f;
  const double slope = h.scl_slope;
  const double inter = h.scl_inter;
  const Endianness e = h.endianness;

  std::vector<double> data(ext.voxel_count());
  for (std::size_t i = 0; i < data.size(); ++i) {
    const std::size_t p = start + i * bpv;
    double raw = 0.0;
    switch (h.datatype) {
      case Datatype::uint8: raw = stream[p]; break;
      case Datatype::int16: raw = detail::read_scalar<std::int16_t>(stream, p, e); break;
      case Datatype::int32: raw = detail::read_scalar<std::int32_t>(stream, p, e); break;
      case Datatype::float32: raw = detail::read_scalar<float>(stream, p, e); break;
      case Datatype::float64: raw = detail::read_scalar<double>(stream, p, e); break;
    }
    data[i] = scaled ? slope * raw + inter : raw;
  }

  auto size_or_one = [](float v) { return v > 0.0f ? static_cast<double>(v) : 1.0; };
  return Volume(ext, {size_or_one(h.pixdim[1]), size_or_one(h.pixdim[2]), size_or_one(h.pixdim[3])},
                std::move(data), std::move(source_id));
}

inline std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("volume_io", "IoFailure", "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// Reads the header of a .nii or .nii.gz file.
inline NiftiHeader load_header(const std::filesystem::path& path) {
  auto bytes = read_bytes(path);
  if (detail::is_gzip(bytes)) bytes = detail::gunzip(bytes);
  return parse_header(bytes);
}

inline Volume load_volume(const std::filesystem::path& path) {
  const auto bytes = read_bytes(path);
  std::string id = path.filename().string();
  for (const char* ext : {".nii.gz", ".nii"}) {
    if (id.size() > std::strlen(ext) && id.ends_with(ext)) {
      id.resize(id.size() - std::strlen(ext));
      break;
    }
  }
  return decode_volume(bytes, id);
}

inline void save_volume(const Volume& volume, const std::filesystem::path& path,
                        Datatype datatype = Datatype::float32) {
  const auto bytes = write_volume(volume, datatype);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("volume_io", "IoFailure", "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("volume_io", "IoFailure", "write failed for " + path.string());
}

// Cuts the volume into 2D slices perpendicular to `axis`, in ascending index
// order. A slice's rows run along the second remaining axis and its columns
// along the first (for axis z: height = ny, width = nx).
inline std::vector<Slice> extract_slices(const Volume& volume, Axis axis = Axis::z) {
  const auto& e = volume.extents();
  std::vector<Slice> slices;
  switch (axis) {
    case Axis::z:
      slices.reserve(e.nz);
      for (std::size_t z = 0; z < e.nz; ++z) {
        std::vector<double> px(e.ny * e.nx);
        for (std::size_t y = 0; y < e.ny; ++y)
          for (std::size_t x = 0; x < e.nx; ++x) px[y * e.nx + x] = volume.at(x, y, z);
        slices.emplace_back(e.ny, e.nx, std::move(px), z, volume.source_id());
      }
      break;
    case Axis::y:
      slices.reserve(e.ny);
      for (std::size_t y = 0; y < e.ny; ++y) {
        std::vector<double> px(e.nz * e.nx);
        for (std::size_t z = 0; z < e.nz; ++z)
          for (std::size_t x = 0; x < e.nx; ++x) px[z * e.nx + x] = volume.at(x, y, z);
        slices.emplace_back(e.nz, e.nx, std::move(px), y, volume.source_id());
      }
      break;
    case Axis::x:
      slices.reserve(e.nx);
      for (std::size_t x = 0; x < e.nx; ++x) {
        std::vector<double> px(e.nz * e.ny);
        for (std::size_t z = 0; z < e.nz; ++z)
          for (std::size_t y = 0; y < e.ny; ++y) px[z * e.ny + y] = volume.at(x, y, z);
        slices.emplace_back(e.nz, e.ny, std::move(px), x, volume.source_id());
      }
      break;
  }
  return slices;
}

}  // namespace mrens
