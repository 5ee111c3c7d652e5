#include "infodemic/container.hpp"

#include <bit>
#include <cmath>
#include <cstring>

#include "infodemic/common.hpp"

namespace infodemic {
namespace {

class Writer {
 public:
  void bytes(std::string_view s) { out_.append(s); }
  void u8(std::uint8_t v) { out_.push_back(static_cast<char>(v)); }
  void u16(std::uint16_t v) { le(v, 2); }
  void u32(std::uint32_t v) { le(v, 4); }
  void u64(std::uint64_t v) { le(v, 8); }
  std::string take() { return std::move(out_); }
  std::size_t size() const { return out_.size(); }

 private:
  std::string out_;
  void le(std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) out_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
};

class Reader {
 public:
  explicit Reader(std::string_view data) : data_(data) {}
  bool done() const { return pos_ >= data_.size(); }
  std::size_t remaining() const { return data_.size() - pos_; }
  std::string_view bytes(std::size_t n) {
    need(n);
    auto s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::uint8_t u8() { return static_cast<std::uint8_t>(le(1)); }
  std::uint16_t u16() { return static_cast<std::uint16_t>(le(2)); }
  std::uint32_t u32() { return static_cast<std::uint32_t>(le(4)); }
  std::uint64_t u64() { return le(8); }

 private:
  std::string_view data_;
  std::size_t pos_ = 0;
  void need(std::size_t n) const {
    if (data_.size() - pos_ < n) throw Error("model container is truncated");
  }
  std::uint64_t le(int n) {
    need(static_cast<std::size_t>(n));
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
    pos_ += static_cast<std::size_t>(n);
    return v;
  }
};

void section(Writer& w, std::string_view tag, const std::string& payload) {
  w.bytes(tag);
  w.u64(payload.size());
  w.bytes(payload);
}

}  // namespace

const StoredTensor& ModelContainer::tensor(std::string_view name) const {
  for (const auto& t : tensors) {
    if (t.name == name) return t;
  }
  throw Error("model container has no tensor '" + std::string(name) + "'");
}

std::string encode_container(const ModelContainer& c) {
  Writer w;
  w.bytes("IFDM");
  w.u8(kContainerVersion);
  section(w, "ARCH", c.architecture);
  {
    Writer s;
    s.u64(c.vocabulary_hash);
    section(w, "VHSH", s.take());
  }
  {
    Writer s;
    s.u64(c.pipeline_hash);
    section(w, "PHSH", s.take());
  }
  Writer p;
  p.u32(static_cast<std::uint32_t>(c.tensors.size()));
  for (const auto& t : c.tensors) {
    if (t.name.size() > 0xffff) throw Error("tensor name too long");
    if (t.values.size() != nn::element_count(t.shape)) throw ShapeError("stored tensor '" + t.name + "' shape mismatch");
    p.u16(static_cast<std::uint16_t>(t.name.size()));
    p.bytes(t.name);
    p.u8(static_cast<std::uint8_t>(t.dtype));
    p.u8(static_cast<std::uint8_t>(t.shape.size()));
    for (auto d : t.shape) p.u64(d);
    for (double v : t.values) {
      switch (t.dtype) {
        case DType::f32: p.u32(std::bit_cast<std::uint32_t>(static_cast<float>(v))); break;
        case DType::f64: p.u64(std::bit_cast<std::uint64_t>(v)); break;
        case DType::i32: p.u32(static_cast<std::uint32_t>(static_cast<std::int32_t>(std::llround(v)))); break;
      }
    }
  }
  section(w, "PARM", p.take());
  return w.take();
}

ModelContainer decode_container(std::string_view bytes) {
  Reader r(bytes);
  if (bytes.size() < 5 || r.bytes(4) != "IFDM") throw Error("not a model container (bad magic)");
  const auto version = r.u8();
  if (version != kContainerVersion) {
    throw Error("unsupported model container version " + std::to_string(version));
  }
  ModelContainer c;
  bool seen_arch = false, seen_params = false;
  while (!r.done()) {
    const std::string tag(r.bytes(4));
    const auto len = r.u64();
    Reader s(r.bytes(len));
    if (tag == "ARCH") {
      c.architecture = std::string(s.bytes(len));
      seen_arch = true;
    } else if (tag == "VHSH") {
      c.vocabulary_hash = s.u64();
    } else if (tag == "PHSH") {
      c.pipeline_hash = s.u64();
    } else if (tag == "PARM") {
      const auto count = s.u32();
      for (std::uint32_t k = 0; k < count; ++k) {
        StoredTensor t;
        t.name = std::string(s.bytes(s.u16()));
        const auto dtype = s.u8();
        if (dtype > 2) throw Error("unknown dtype in tensor '" + t.name + "'");
        t.dtype = static_cast<DType>(dtype);
        const auto rank = s.u8();
        for (int d = 0; d < rank; ++d) t.shape.push_back(static_cast<std::size_t>(s.u64()));
        const std::size_t n = nn::element_count(t.shape);
        const std::size_t width = t.dtype == DType::f64 ? 8 : 4;
        if (n > s.remaining() / width) throw Error("model container is truncated");
        t.values.resize(n);
        for (std::size_t i = 0; i < n; ++i) {
          switch (t.dtype) {
            case DType::f32: t.values[i] = std::bit_cast<float>(s.u32()); break;
            case DType::f64: t.values[i] = std::bit_cast<double>(s.u64()); break;
            case DType::i32: t.values[i] = static_cast<std::int32_t>(s.u32()); break;
          }
        }
        c.tensors.push_back(std::move(t));
      }
      seen_params = true;
    }
  }
  if (!seen_arch || !seen_params) throw Error("model container is missing its ARCH or PARM section");
  return c;
}

void save_container(const std::string& path, const ModelContainer& container) {
  write_file(path, encode_container(container));
}

ModelContainer load_container(const std::string& path) { return decode_container(read_file(path)); }

void verify_container_hashes(const ModelContainer& c, std::uint64_t vocabulary_hash, std::uint64_t pipeline_hash) {
  if (c.vocabulary_hash != vocabulary_hash) {
    throw Error("model was trained with vocabulary " + hex64(c.vocabulary_hash) + " but the prepared pipeline has " +
                hex64(vocabulary_hash) + "; re-run prepare with the training configuration or retrain");
  }
  if (c.pipeline_hash != pipeline_hash) {
    throw Error("model was trained with preprocessing config " + hex64(c.pipeline_hash) + " but the active one is " +
                hex64(pipeline_hash) + "; preprocessing settings differ");
  }
}

}  // namespace infodemic
