#include "resque/tensor_io.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>
#include <string>

#include "resque/errors.hpp"

namespace resque {

namespace {

class Writer {
 public:
  explicit Writer(std::vector<std::uint8_t>& out) : out_(out) {}
  void u8(std::uint8_t v) { out_.push_back(v); }
  void u16(std::uint16_t v) { le(v, 2); }
  void u32(std::uint32_t v) { le(v, 4); }
  void u64(std::uint64_t v) { le(v, 8); }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void bytes(const char* s, std::size_t n) { out_.insert(out_.end(), s, s + n); }

 private:
  void le(std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  std::vector<std::uint8_t>& out_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> in) : in_(in) {}
  std::size_t offset() const noexcept { return pos_; }
  std::size_t remaining() const noexcept { return in_.size() - pos_; }

  void need(std::size_t n, const char* what) const {
    if (remaining() < n) throw FormatError(std::string("truncated ") + what, pos_);
  }
  std::uint8_t u8(const char* what) { return static_cast<std::uint8_t>(le(1, what)); }
  std::uint16_t u16(const char* what) { return static_cast<std::uint16_t>(le(2, what)); }
  std::uint32_t u32(const char* what) { return static_cast<std::uint32_t>(le(4, what)); }
  std::uint64_t u64(const char* what) { return le(8, what); }

 private:
  std::uint64_t le(int n, const char* what) {
    need(static_cast<std::size_t>(n), what);
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(in_[pos_ + i]) << (8 * i);
    pos_ += static_cast<std::size_t>(n);
    return v;
  }
  std::span<const std::uint8_t> in_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> encode_tensor(const Tensor& tensor,
                                        std::optional<std::span<const int>> labels) {
  tensor.check_finite();
  std::vector<std::uint8_t> out;
  out.reserve(kTensorHeaderSize + 8 * tensor.rank() + 4 * tensor.size() +
              (labels ? 8 + 4 * labels->size() : 0));
  Writer w(out);
  w.bytes("RSQE", 4);
  w.u32(kTensorFileVersion);
  w.u8(kDtypeF32);
  w.u8(labels ? kFlagLabels : 0);
  w.u16(0);
  w.u32(static_cast<std::uint32_t>(tensor.rank()));
  for (std::size_t d : tensor.shape()) w.u64(d);
  for (float v : tensor.data()) w.f32(v);
  if (labels) {
    w.u64(labels->size());
    for (int label : *labels) {
      if (label < 0) throw ParameterError("labels must be non-negative to be stored as u32");
      w.u32(static_cast<std::uint32_t>(label));
    }
  }
  return out;
}

TensorFile decode_tensor(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  r.need(4, "magic");
  if (std::memcmp(bytes.data(), "RSQE", 4) != 0) throw FormatError("bad magic", 0);
  r.u32("magic");

  const std::size_t version_at = r.offset();
  if (const auto version = r.u32("version"); version != kTensorFileVersion) {
    throw FormatError("unsupported version " + std::to_string(version), version_at);
  }
  const std::size_t dtype_at = r.offset();
  if (const auto dtype = r.u8("dtype"); dtype != kDtypeF32) {
    throw FormatError("unsupported dtype " + std::to_string(dtype), dtype_at);
  }
  const std::size_t flags_at = r.offset();
  const std::uint8_t flags = r.u8("flags");
  if ((flags & ~kFlagLabels) != 0) throw FormatError("unknown flag bits", flags_at);
  const std::size_t reserved_at = r.offset();
  if (r.u16("reserved") != 0) throw FormatError("reserved field must be zero", reserved_at);

  const std::uint32_t ndim = r.u32("ndim");
  r.need(8 * static_cast<std::size_t>(ndim), "dims");
  std::vector<std::size_t> shape(ndim);
  std::size_t count = 1;
  for (auto& d : shape) {
    const std::size_t dim_at = r.offset();
    const std::uint64_t v = r.u64("dims");
    if (v != 0 && count > std::numeric_limits<std::size_t>::max() / 4 / v) {
      throw FormatError("dimension product overflows", dim_at);
    }
    d = static_cast<std::size_t>(v);
    count *= d;
  }

  const std::size_t payload_at = r.offset();
  if (r.remaining() / 4 < count) throw FormatError("truncated payload", payload_at);
  std::vector<float> data(count);
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t at = r.offset();
    data[i] = std::bit_cast<float>(r.u32("payload"));
    if (!std::isfinite(data[i])) throw FormatError("non-finite payload value", at);
  }

  TensorFile file{Tensor(std::move(shape), std::move(data)), std::nullopt};
  if (flags & kFlagLabels) {
    const std::uint64_t n = r.u64("label count");
    if (r.remaining() / 4 < n) throw FormatError("truncated labels", r.offset());
    std::vector<int> labels(n);
    for (auto& label : labels) {
      const std::size_t at = r.offset();
      const std::uint32_t v = r.u32("labels");
      if (v > static_cast<std::uint32_t>(std::numeric_limits<int>::max())) {
        throw FormatError("label out of range", at);
      }
      label = static_cast<int>(v);
    }
    file.labels = std::move(labels);
  }
  if (r.remaining() != 0) throw FormatError("trailing bytes after tensor", r.offset());
  return file;
}

void write_tensor_file(const std::filesystem::path& path, const Tensor& tensor,
                       std::optional<std::span<const int>> labels) {
  const auto bytes = encode_tensor(tensor, labels);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ParameterError("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw ParameterError("write failed for " + path.string());
}

TensorFile read_tensor_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParameterError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_tensor(bytes);
}

}  // namespace resque
