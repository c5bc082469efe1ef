#include "amx/container.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "amx/error.hpp"

namespace amx {

namespace {

void put_u32(std::vector<uint8_t>& out, uint32_t v) {
  out.push_back(static_cast<uint8_t>(v & 0xff));
  out.push_back(static_cast<uint8_t>((v >> 8) & 0xff));
  out.push_back(static_cast<uint8_t>((v >> 16) & 0xff));
  out.push_back(static_cast<uint8_t>((v >> 24) & 0xff));
}

uint32_t get_u32(const std::vector<uint8_t>& buf, size_t& pos) {
  if (pos + 4 > buf.size()) throw IoError("container truncated while reading u32");
  uint32_t v = static_cast<uint32_t>(buf[pos]) |
               (static_cast<uint32_t>(buf[pos + 1]) << 8) |
               (static_cast<uint32_t>(buf[pos + 2]) << 16) |
               (static_cast<uint32_t>(buf[pos + 3]) << 24);
  pos += 4;
  return v;
}

}  // namespace

void write_container(const std::string& path, const std::string& spec,
                     const std::vector<TensorBlob>& tensors) {
  std::vector<uint8_t> buf;
  buf.insert(buf.end(), {'A', 'M', 'X', 'M'});
  put_u32(buf, kContainerVersion);
  put_u32(buf, static_cast<uint32_t>(spec.size()));
  buf.insert(buf.end(), spec.begin(), spec.end());
  for (const auto& t : tensors) {
    if (numel(t.shape) != static_cast<int64_t>(t.data.size()))
      throw ValueError("container tensor data does not match shape " +
                       shape_str(t.shape));
    put_u32(buf, static_cast<uint32_t>(t.shape.size()));
    for (int64_t d : t.shape) put_u32(buf, static_cast<uint32_t>(d));
    for (float f : t.data) put_u32(buf, std::bit_cast<uint32_t>(f));
  }
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open " + path + " for writing");
  os.write(reinterpret_cast<const char*>(buf.data()),
           static_cast<std::streamsize>(buf.size()));
  if (!os) throw IoError("short write to " + path);
}

Container read_container(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path);
  std::vector<uint8_t> buf((std::istreambuf_iterator<char>(is)),
                           std::istreambuf_iterator<char>());
  size_t pos = 0;
  if (buf.size() < 4 || buf[0] != 'A' || buf[1] != 'M' || buf[2] != 'X' ||
      buf[3] != 'M')
    throw IoError("bad container magic in " + path);
  pos = 4;
  const uint32_t version = get_u32(buf, pos);
  if (version != kContainerVersion)
    throw IoError("unsupported container version " + std::to_string(version) +
                  " in " + path);
  const uint32_t spec_len = get_u32(buf, pos);
  if (pos + spec_len > buf.size()) throw IoError("container truncated in spec string");
  Container c;
  c.spec.assign(buf.begin() + static_cast<ptrdiff_t>(pos),
                buf.begin() + static_cast<ptrdiff_t>(pos + spec_len));
  pos += spec_len;
  while (pos < buf.size()) {
    const uint32_t rank = get_u32(buf, pos);
    if (rank > 8) throw IoError("implausible tensor rank " + std::to_string(rank));
    TensorBlob blob;
    int64_t n = 1;
    for (uint32_t i = 0; i < rank; ++i) {
      const uint32_t d = get_u32(buf, pos);
      blob.shape.push_back(static_cast<int64_t>(d));
      n *= d;
    }
    blob.data.resize(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i)
      blob.data[static_cast<size_t>(i)] = std::bit_cast<float>(get_u32(buf, pos));
    c.tensors.push_back(std::move(blob));
  }
  return c;
}

}  // namespace amx
