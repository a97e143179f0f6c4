#include "mrtumor/nifti.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>
#include <string>

#include "mrtumor/error.hpp"

namespace mrtumor {

namespace {

// Header field offsets of the NIfTI-1 layout.
constexpr std::size_t kOffSizeofHdr = 0;
constexpr std::size_t kOffDim = 40;
constexpr std::size_t kOffDatatype = 70;
constexpr std::size_t kOffBitpix = 72;
constexpr std::size_t kOffPixdim = 76;
constexpr std::size_t kOffVoxOffset = 108;
constexpr std::size_t kOffSclSlope = 112;
constexpr std::size_t kOffSclInter = 116;
constexpr std::size_t kOffXyztUnits = 123;
constexpr std::size_t kOffDescrip = 148;
constexpr std::size_t kOffMagic = 344;

class ByteReader {
 public:
  ByteReader(std::span<const std::uint8_t> bytes, bool swap) : bytes_(bytes), swap_(swap) {}

  template <typename T>
  T get(std::size_t offset) const {
    std::array<std::uint8_t, sizeof(T)> raw{};
    std::memcpy(raw.data(), bytes_.data() + offset, sizeof(T));
    if (swap_) std::reverse(raw.begin(), raw.end());
    T value;
    std::memcpy(&value, raw.data(), sizeof(T));
    return value;
  }

 private:
  std::span<const std::uint8_t> bytes_;
  bool swap_;
};

class ByteWriter {
 public:
  explicit ByteWriter(std::vector<std::uint8_t>& out) : out_(out) {}

  // Always little-endian.
  template <typename T>
  void put(std::size_t offset, T value) {
    std::array<std::uint8_t, sizeof(T)> raw{};
    std::memcpy(raw.data(), &value, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(raw.begin(), raw.end());
    std::memcpy(out_.data() + offset, raw.data(), sizeof(T));
  }

 private:
  std::vector<std::uint8_t>& out_;
};

int bits_for(Datatype dt) {
  switch (dt) {
    case Datatype::kUint8: return 8;
    case Datatype::kInt16: return 16;
    case Datatype::kFloat32: return 32;
  }
  return 0;
}

}  // namespace

Volume::Volume(std::int64_t nx, std::int64_t ny, std::int64_t nz, std::array<float, 3> pixdim) {
  if (nx < 1 || ny < 1 || nz < 1) fail(ErrorCode::kBadDims, "volume dims must be >= 1");
  header.dims = {nx, ny, nz};
  header.pixdim = pixdim;
  data.assign(header.voxel_count(), 0.0f);
}

Volume parse_volume(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kNiftiHeaderSize)
    fail(ErrorCode::kTruncatedFile, "file shorter than the 348-byte NIfTI-1 header");

  // dim[0] must be in 1..7 in the file's own byte order.
  bool swap = false;
  {
    ByteReader native(bytes, false);
    auto dim0 = native.get<std::int16_t>(kOffDim);
    if (dim0 < 1 || dim0 > 7) {
      ByteReader swapped(bytes, true);
      auto dim0s = swapped.get<std::int16_t>(kOffDim);
      if (dim0s < 1 || dim0s > 7)
        fail(ErrorCode::kBadHeader, "dim[0] out of range in either byte order");
      swap = true;
    }
  }
  ByteReader in(bytes, swap);

  if (in.get<std::int32_t>(kOffSizeofHdr) != static_cast<std::int32_t>(kNiftiHeaderSize))
    fail(ErrorCode::kBadHeader, "sizeof_hdr is not 348");

  NiftiHeader h;
  std::memcpy(h.magic.data(), bytes.data() + kOffMagic, 4);
  const std::array<char, 4> single_file{'n', '+', '1', '\0'};
  if (h.magic != single_file)
    fail(ErrorCode::kBadMagic, "magic is not \"n+1\\0\" (only single-file NIfTI-1 is supported)");

  const int ndim = in.get<std::int16_t>(kOffDim);
  std::array<std::int64_t, 7> dim{};
  for (int k = 0; k < 7; ++k) dim[k] = in.get<std::int16_t>(kOffDim + 2 * (k + 1));
  for (int k = 0; k < 7; ++k) {
    if (k < ndim) {
      if (dim[k] < 1) fail(ErrorCode::kBadHeader, "non-positive dimension " + std::to_string(k + 1));
      if (k >= 3 && dim[k] != 1)
        fail(ErrorCode::kBadHeader, "only 3-D volumes are supported");
    }
  }
  h.dims = {dim[0], ndim >= 2 ? dim[1] : 1, ndim >= 3 ? dim[2] : 1};

  const auto code = in.get<std::int16_t>(kOffDatatype);
  switch (code) {
    case static_cast<std::int16_t>(Datatype::kUint8):
    case static_cast<std::int16_t>(Datatype::kInt16):
    case static_cast<std::int16_t>(Datatype::kFloat32):
      h.datatype = static_cast<Datatype>(code);
      break;
    default:
      fail(ErrorCode::kUnsupportedDatatype, "datatype code " + std::to_string(code) + " not supported");
  }
  const int bits = bits_for(h.datatype);
  if (in.get<std::int16_t>(kOffBitpix) != bits)
    fail(ErrorCode::kBadHeader, "bitpix does not match datatype");

  for (int k = 0; k < 3; ++k) {
    float p = in.get<float>(kOffPixdim + 4 * (k + 1));
    h.pixdim[k] = std::isfinite(p) && p > 0.0f ? p : 1.0f;
  }

  h.vox_offset = in.get<float>(kOffVoxOffset);
  if (!std::isfinite(h.vox_offset) || h.vox_offset < static_cast<float>(kNiftiDataOffset) ||
      h.vox_offset > static_cast<float>(std::numeric_limits<std::int32_t>::max()))
    fail(ErrorCode::kBadHeader, "vox_offset must be a finite value >= 352");

  h.scl_slope = in.get<float>(kOffSclSlope);
  h.scl_inter = in.get<float>(kOffSclInter);
  // Zero or non-finite slope means "no scaling".
  if (!std::isfinite(h.scl_slope) || h.scl_slope == 0.0f) {
    h.scl_slope = 1.0f;
    h.scl_inter = 0.0f;
  }
  if (!std::isfinite(h.scl_inter)) h.scl_inter = 0.0f;

  // dims are <= 32767 each, so the product fits comfortably in 64 bits.
  const std::uint64_t count = static_cast<std::uint64_t>(h.dims[0]) * h.dims[1] * h.dims[2];
  const std::uint64_t offset = static_cast<std::uint64_t>(h.vox_offset);
  const std::uint64_t need = offset + count * (bits / 8);
  if (need > bytes.size())
    fail(ErrorCode::kTruncatedFile, "image data shorter than dims imply (" + std::to_string(need) +
                                        " bytes needed, " + std::to_string(bytes.size()) + " present)");

  Volume v;
  v.header = h;
  v.data.resize(count);
  const double slope = h.scl_slope;
  const double inter = h.scl_inter;
  const bool unit = slope == 1.0 && inter == 0.0;
  for (std::uint64_t i = 0; i < count; ++i) {
    float value = 0.0f;
    switch (h.datatype) {
      case Datatype::kUint8: value = static_cast<float>(bytes[offset + i] * slope + inter); break;
      case Datatype::kInt16:
        value = static_cast<float>(in.get<std::int16_t>(offset + 2 * i) * slope + inter);
        break;
      case Datatype::kFloat32: {
        // Unit scaling is skipped so that -0.0 and friends survive bit-exactly.
        const float raw = in.get<float>(offset + 4 * i);
        value = unit ? raw : static_cast<float>(raw * slope + inter);
        break;
      }
    }
    if (!std::isfinite(value))
      fail(ErrorCode::kNonFinite, "non-finite voxel at index " + std::to_string(i));
    v.data[i] = value;
  }
  v.header.scl_slope = 1.0f;
  v.header.scl_inter = 0.0f;
  v.header.vox_offset = static_cast<float>(kNiftiDataOffset);
  return v;
}

std::vector<std::uint8_t> serialize_volume(const Volume& v) {
  const auto& h = v.header;
  for (auto d : h.dims)
    if (d < 1 || d > std::numeric_limits<std::int16_t>::max())
      fail(ErrorCode::kBadDims, "volume dims must be in [1, 32767]");
  if (v.data.size() != h.voxel_count())
    fail(ErrorCode::kBadDims, "data length does not match dims");
  for (std::size_t i = 0; i < v.data.size(); ++i)
    if (!std::isfinite(v.data[i]))
      fail(ErrorCode::kNonFinite, "refusing to write non-finite voxel at index " + std::to_string(i));

  const int bits = bits_for(h.datatype);
  if (bits == 0) fail(ErrorCode::kUnsupportedDatatype, "unsupported datatype");
  std::vector<std::uint8_t> out(kNiftiDataOffset + v.data.size() * (bits / 8), 0);
  ByteWriter w(out);

  w.put<std::int32_t>(kOffSizeofHdr, static_cast<std::int32_t>(kNiftiHeaderSize));
  w.put<std::int16_t>(kOffDim, 3);
  for (int k = 0; k < 7; ++k)
    w.put<std::int16_t>(kOffDim + 2 * (k + 1), k < 3 ? static_cast<std::int16_t>(h.dims[k]) : 1);
  w.put<std::int16_t>(kOffDatatype, static_cast<std::int16_t>(h.datatype));
  w.put<std::int16_t>(kOffBitpix, static_cast<std::int16_t>(bits));
  w.put<float>(kOffPixdim, 1.0f);  // qfac
  for (int k = 0; k < 3; ++k) w.put<float>(kOffPixdim + 4 * (k + 1), h.pixdim[k]);
  w.put<float>(kOffVoxOffset, static_cast<float>(kNiftiDataOffset));
  w.put<float>(kOffSclSlope, 1.0f);
  w.put<float>(kOffSclInter, 0.0f);
  out[kOffXyztUnits] = 2;  // millimetres
  constexpr char descrip[] = "mrtumor";
  std::memcpy(out.data() + kOffDescrip, descrip, sizeof(descrip) - 1);
  const char magic[4] = {'n', '+', '1', '\0'};
  std::memcpy(out.data() + kOffMagic, magic, 4);

  const std::size_t base = kNiftiDataOffset;
  for (std::size_t i = 0; i < v.data.size(); ++i) {
    const float value = v.data[i];
    switch (h.datatype) {
      case Datatype::kUint8: {
        double r = std::clamp(std::round(static_cast<double>(value)), 0.0, 255.0);
        out[base + i] = static_cast<std::uint8_t>(r);
        break;
      }
      case Datatype::kInt16: {
        double r = std::clamp(std::round(static_cast<double>(value)), -32768.0, 32767.0);
        w.put<std::int16_t>(base + 2 * i, static_cast<std::int16_t>(r));
        break;
      }
      case Datatype::kFloat32:
        w.put<float>(base + 4 * i, value);
        break;
    }
  }
  return out;
}

Volume read_volume(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::kIoFailure, "cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) fail(ErrorCode::kIoFailure, "read error on " + path.string());
  return parse_volume(bytes);
}

void write_volume(const Volume& v, const std::filesystem::path& path) {
  auto bytes = serialize_volume(v);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::kIoFailure, "cannot create " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) fail(ErrorCode::kIoFailure, "write error on " + path.string());
}

}  // namespace mrtumor
