#include "ulfe/vol/nifti.hpp"

#include <zlib.h>

#include <bit>
#include <cstring>

namespace ulfe {
namespace vol {

namespace {

#pragma pack(push, 1)
struct NiftiHeader {
  std::int32_t sizeof_hdr;
  char data_type[10];
  char db_name[18];
  std::int32_t extents;
  std::int16_t session_error;
  char regular;
  char dim_info;
  std::int16_t dim[8];
  float intent_p1, intent_p2, intent_p3;
  std::int16_t intent_code;
  std::int16_t datatype;
  std::int16_t bitpix;
  std::int16_t slice_start;
  float pixdim[8];
  float vox_offset;
  float scl_slope;
  float scl_inter;
  std::int16_t slice_end;
  char slice_code;
  char xyzt_units;
  float cal_max, cal_min;
  float slice_duration;
  float toffset;
  std::int32_t glmax, glmin;
  char descrip[80];
  char aux_file[24];
  std::int16_t qform_code;
  std::int16_t sform_code;
  float quatern_b, quatern_c, quatern_d;
  float qoffset_x, qoffset_y, qoffset_z;
  float srow_x[4], srow_y[4], srow_z[4];
  char intent_name[16];
  char magic[4];
};
#pragma pack(pop)
static_assert(sizeof(NiftiHeader) == 348, "NIfTI-1 header is 348 bytes");

constexpr std::int16_t kDtU8 = 2;
constexpr std::int16_t kDtI16 = 4;
constexpr std::int16_t kDtI32 = 8;
constexpr std::int16_t kDtF32 = 16;
constexpr std::int16_t kDtF64 = 64;
constexpr std::int16_t kDtU16 = 512;

template <typename T>
T bswap(T v) {
  auto b = std::bit_cast<std::array<unsigned char, sizeof(T)>>(v);
  std::reverse(b.begin(), b.end());
  return std::bit_cast<T>(b);
}

void swap_header(NiftiHeader& h) {
  h.sizeof_hdr = bswap(h.sizeof_hdr);
  for (auto& d : h.dim) d = bswap(d);
  h.datatype = bswap(h.datatype);
  h.bitpix = bswap(h.bitpix);
  for (auto& p : h.pixdim) p = bswap(p);
  h.vox_offset = bswap(h.vox_offset);
  h.scl_slope = bswap(h.scl_slope);
  h.scl_inter = bswap(h.scl_inter);
}

class GzReader {
 public:
  explicit GzReader(const std::string& path) : path_(path), f_(gzopen(path.c_str(), "rb")) {
    if (!f_) throw std::runtime_error("nifti: cannot open " + path);
  }
  ~GzReader() {
    if (f_) gzclose(f_);
  }
  void read_exact(void* dst, std::size_t n, const char* what) {
    const int got = gzread(f_, dst, static_cast<unsigned>(n));
    if (got < 0 || static_cast<std::size_t>(got) != n)
      throw std::runtime_error(std::string("nifti: truncated ") + what + " in " + path_);
  }
  void skip(std::size_t n) {
    std::vector<char> buf(std::min<std::size_t>(n, 4096));
    while (n > 0) {
      const std::size_t take = std::min(n, buf.size());
      read_exact(buf.data(), take, "data");
      n -= take;
    }
  }

 private:
  std::string path_;
  gzFile f_ = nullptr;
};

template <typename Src>
void convert_payload(GzReader& r, bool swapped, index_t n, float slope, float inter, real_t* out) {
  std::vector<Src> buf(static_cast<std::size_t>(n));
  r.read_exact(buf.data(), static_cast<std::size_t>(n) * sizeof(Src), "data");
  const bool rescale = slope != 0.0f && !(slope == 1.0f && inter == 0.0f);
  for (index_t i = 0; i < n; ++i) {
    Src v = buf[static_cast<std::size_t>(i)];
    if (swapped && sizeof(Src) > 1) v = bswap(v);
    double x = static_cast<double>(v);
    if (rescale) x = static_cast<double>(slope) * x + static_cast<double>(inter);
    out[i] = static_cast<real_t>(x);
  }
}

struct ParsedHeader {
  NiftiHeader h;
  bool swapped = false;
  Shape shape;  // (D, H, W)
};

ParsedHeader read_header(GzReader& r, const std::string& path) {
  ParsedHeader p;
  r.read_exact(&p.h, sizeof(NiftiHeader), "header");
  if (p.h.sizeof_hdr != 348) {
    swap_header(p.h);
    p.swapped = true;
    if (p.h.sizeof_hdr != 348) throw std::runtime_error("nifti: corrupt header in " + path);
  }
  if (std::memcmp(p.h.magic, "n+1", 4) != 0) throw std::runtime_error("nifti: corrupt header in " + path);
  const int nd = p.h.dim[0];
  if (nd < 1 || nd > 7) throw std::runtime_error("nifti: corrupt header in " + path);
  index_t trailing = 1;
  for (int i = 4; i <= nd; ++i) trailing *= std::max<index_t>(1, p.h.dim[i]);
  if (nd < 3 || trailing != 1) throw std::runtime_error("nifti: non-3D payload in " + path);
  for (int i = 1; i <= 3; ++i)
    if (p.h.dim[i] < 1) throw std::runtime_error("nifti: corrupt header in " + path);
  p.shape = {p.h.dim[3], p.h.dim[2], p.h.dim[1]};
  const index_t off = static_cast<index_t>(p.h.vox_offset);
  if (off < static_cast<index_t>(sizeof(NiftiHeader)))
    throw std::runtime_error("nifti: corrupt header in " + path);
  r.skip(static_cast<std::size_t>(off) - sizeof(NiftiHeader));
  return p;
}

NiftiHeader make_header(const Shape& shape, const std::array<double, 3>& spacing, std::int16_t dtype,
                        std::int16_t bitpix) {
  NiftiHeader h;
  std::memset(&h, 0, sizeof(h));
  h.sizeof_hdr = 348;
  h.regular = 'r';
  h.dim[0] = 3;
  h.dim[1] = static_cast<std::int16_t>(shape[2]);
  h.dim[2] = static_cast<std::int16_t>(shape[1]);
  h.dim[3] = static_cast<std::int16_t>(shape[0]);
  for (int i = 4; i < 8; ++i) h.dim[i] = 1;
  h.datatype = dtype;
  h.bitpix = bitpix;
  h.pixdim[0] = 1.0f;
  h.pixdim[1] = static_cast<float>(spacing[2]);
  h.pixdim[2] = static_cast<float>(spacing[1]);
  h.pixdim[3] = static_cast<float>(spacing[0]);
  h.vox_offset = 352.0f;
  h.scl_slope = 1.0f;
  h.xyzt_units = 2;  // millimetres
  std::memcpy(h.magic, "n+1", 4);
  return h;
}

void write_blob(const std::string& path, const NiftiHeader& h, const void* payload, std::size_t bytes) {
  const char pad[4] = {0, 0, 0, 0};
  const bool gz = path.size() >= 3 && path.compare(path.size() - 3, 3, ".gz") == 0;
  if (gz) {
    gzFile f = gzopen(path.c_str(), "wb6");
    if (!f) throw std::runtime_error("nifti: cannot open " + path + " for writing");
    const bool ok = gzwrite(f, &h, sizeof(h)) == static_cast<int>(sizeof(h)) &&
                    gzwrite(f, pad, 4) == 4 &&
                    (bytes == 0 || gzwrite(f, payload, static_cast<unsigned>(bytes)) ==
                                       static_cast<int>(bytes));
    if (gzclose(f) != Z_OK || !ok) throw std::runtime_error("nifti: short write to " + path);
  } else {
    std::FILE* f = std::fopen(path.c_str(), "wb");
    if (!f) throw std::runtime_error("nifti: cannot open " + path + " for writing");
    const bool ok = std::fwrite(&h, 1, sizeof(h), f) == sizeof(h) && std::fwrite(pad, 1, 4, f) == 4 &&
                    std::fwrite(payload, 1, bytes, f) == bytes;
    if (std::fclose(f) != 0 || !ok) throw std::runtime_error("nifti: short write to " + path);
  }
}

std::array<double, 3> spacing_of(const NiftiHeader& h) {
  auto fix = [](float p) { return p > 0.0f ? static_cast<double>(p) : 1.0; };
  return {fix(h.pixdim[3]), fix(h.pixdim[2]), fix(h.pixdim[1])};
}

}  // namespace

Volume read_nifti(const std::string& path) {
  GzReader r(path);
  ParsedHeader p = read_header(r, path);
  Volume v;
  v.spacing = spacing_of(p.h);
  v.data = Tensor<real_t>(p.shape);
  const index_t n = v.data.numel();
  switch (p.h.datatype) {
    case kDtU8:
      convert_payload<std::uint8_t>(r, p.swapped, n, p.h.scl_slope, p.h.scl_inter, v.data.data());
      break;
    case kDtI16:
      convert_payload<std::int16_t>(r, p.swapped, n, p.h.scl_slope, p.h.scl_inter, v.data.data());
      break;
    case kDtU16:
      convert_payload<std::uint16_t>(r, p.swapped, n, p.h.scl_slope, p.h.scl_inter, v.data.data());
      break;
    case kDtI32:
      convert_payload<std::int32_t>(r, p.swapped, n, p.h.scl_slope, p.h.scl_inter, v.data.data());
      break;
    case kDtF32:
      convert_payload<float>(r, p.swapped, n, p.h.scl_slope, p.h.scl_inter, v.data.data());
      break;
    case kDtF64:
      convert_payload<double>(r, p.swapped, n, p.h.scl_slope, p.h.scl_inter, v.data.data());
      break;
    default:
      throw std::runtime_error("nifti: unsupported datatype " + std::to_string(p.h.datatype) + " in " +
                               path);
  }
  return v;
}

void write_nifti(const std::string& path, const Volume& v) {
  if (v.data.rank() != 3) throw std::invalid_argument("nifti: volume must be 3-D");
  NiftiHeader h = make_header(v.data.shape(), v.spacing, kDtF32, 32);
  write_blob(path, h, v.data.data(), static_cast<std::size_t>(v.data.numel()) * sizeof(float));
}

Tensor<std::uint8_t> read_nifti_u8(const std::string& path) {
  GzReader r(path);
  ParsedHeader p = read_header(r, path);
  if (p.h.datatype != kDtU8)
    throw std::runtime_error("nifti: expected uint8 payload in " + path + ", got datatype " +
                             std::to_string(p.h.datatype));
  Tensor<std::uint8_t> t(p.shape);
  r.read_exact(t.data(), static_cast<std::size_t>(t.numel()), "data");
  return t;
}

void write_nifti_u8(const std::string& path, const Tensor<std::uint8_t>& t,
                    const std::array<double, 3>& spacing) {
  if (t.rank() != 3) throw std::invalid_argument("nifti: volume must be 3-D");
  NiftiHeader h = make_header(t.shape(), spacing, kDtU8, 8);
  write_blob(path, h, t.data(), static_cast<std::size_t>(t.numel()));
}

}  // namespace vol
}  // namespace ulfe
