#include <fstream>
#include <iterator>

#include "amx/dataset.hpp"
#include "amx/error.hpp"

namespace amx {

namespace {

uint32_t read_be_u32(std::span<const uint8_t> bytes, size_t pos) {
  return (static_cast<uint32_t>(bytes[pos]) << 24) |
         (static_cast<uint32_t>(bytes[pos + 1]) << 16) |
         (static_cast<uint32_t>(bytes[pos + 2]) << 8) |
         static_cast<uint32_t>(bytes[pos + 3]);
}

size_t ndim_for_magic(uint32_t magic) {
  if (magic == kIdxImagesMagic) return 3;
  if (magic == kIdxLabelsMagic) return 1;
  throw IdxError(IdxError::Kind::bad_magic,
                 "unsupported IDX magic 0x" + [&] {
                   char buf[16];
                   std::snprintf(buf, sizeof(buf), "%08x", magic);
                   return std::string(buf);
                 }());
}

}  // namespace

IdxHeader peek_idx_header(std::span<const uint8_t> bytes) {
  if (bytes.size() < 4)
    throw IdxError(IdxError::Kind::truncated, "IDX data shorter than its magic");
  IdxHeader h;
  h.magic = read_be_u32(bytes, 0);
  const size_t ndim = ndim_for_magic(h.magic);
  if (bytes.size() < 4 + 4 * ndim)
    throw IdxError(IdxError::Kind::truncated, "IDX header truncated: need " +
                                                  std::to_string(4 + 4 * ndim) +
                                                  " bytes, have " +
                                                  std::to_string(bytes.size()));
  int64_t total = 1;
  for (size_t d = 0; d < ndim; ++d) {
    const uint32_t dim = read_be_u32(bytes, 4 + 4 * d);
    if (dim > (1u << 30) || (total > 0 && total > (int64_t{1} << 40) / std::max<int64_t>(1, dim)))
      throw IdxError(IdxError::Kind::dim_overflow,
                     "IDX dimension " + std::to_string(d) + " = " +
                         std::to_string(dim) + " overflows the supported size");
    h.dims.push_back(static_cast<int64_t>(dim));
    total *= dim;
  }
  return h;
}

IdxImages parse_idx_images(std::span<const uint8_t> bytes) {
  IdxHeader h = peek_idx_header(bytes);
  if (h.magic != kIdxImagesMagic)
    throw IdxError(IdxError::Kind::bad_magic,
                   "expected an IDX image file (magic 0x00000803)");
  IdxImages out;
  out.count = h.dims[0];
  out.rows = h.dims[1];
  out.cols = h.dims[2];
  const size_t header = 4 + 4 * h.dims.size();
  const size_t expect = static_cast<size_t>(out.count * out.rows * out.cols);
  if (bytes.size() < header + expect)
    throw IdxError(IdxError::Kind::truncated,
                   "IDX image payload truncated: need " + std::to_string(expect) +
                       " bytes, have " + std::to_string(bytes.size() - header));
  if (bytes.size() > header + expect)
    throw IoError("IDX image file has trailing bytes");
  out.pixels.resize(expect);
  for (size_t i = 0; i < expect; ++i)
    out.pixels[i] = static_cast<float>(bytes[header + i]) / 255.0f;
  return out;
}

IdxLabels parse_idx_labels(std::span<const uint8_t> bytes) {
  IdxHeader h = peek_idx_header(bytes);
  if (h.magic != kIdxLabelsMagic)
    throw IdxError(IdxError::Kind::bad_magic,
                   "expected an IDX label file (magic 0x00000801)");
  const size_t header = 4 + 4 * h.dims.size();
  const size_t expect = static_cast<size_t>(h.dims[0]);
  if (bytes.size() < header + expect)
    throw IdxError(IdxError::Kind::truncated,
                   "IDX label payload truncated: need " + std::to_string(expect) +
                       " bytes, have " + std::to_string(bytes.size() - header));
  if (bytes.size() > header + expect)
    throw IoError("IDX label file has trailing bytes");
  IdxLabels out;
  out.labels.assign(bytes.begin() + static_cast<ptrdiff_t>(header), bytes.end());
  return out;
}

IdxImages load_idx_images(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open IDX file " + path);
  std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(is)),
                             std::istreambuf_iterator<char>());
  return parse_idx_images(bytes);
}

}  // namespace amx
