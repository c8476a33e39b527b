#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"
#include "ulfe/core/tensor.hpp"

namespace ulfe {

static_assert(std::endian::native == std::endian::little, "archive payload is little-endian");

namespace detail {
template <typename S>
struct dtype_name;
template <>
struct dtype_name<float> {
  static constexpr const char* value = "f32";
};
template <>
struct dtype_name<double> {
  static constexpr const char* value = "f64";
};
template <>
struct dtype_name<std::uint8_t> {
  static constexpr const char* value = "u8";
};
template <>
struct dtype_name<std::int64_t> {
  static constexpr const char* value = "i64";
};
}  // namespace detail

inline constexpr char kArchiveMagic[8] = {'U', 'L', 'F', 'E', 'A', 'R', 'C', '1'};

/// Container of named tensors plus a free-form JSON meta block. Byte layout:
/// magic, u64 header length, header JSON, raw little-endian payload. The
/// header's key order is sorted, so identical content yields identical bytes.
class ArchiveWriter {
 public:
  nlohmann::json& meta() { return meta_; }

  template <typename S>
  void add(const std::string& name, const Tensor<S>& t) {
    if (entries_.count(name)) throw std::invalid_argument("archive: duplicate tensor " + name);
    Entry e;
    e.dtype = detail::dtype_name<S>::value;
    e.shape = t.shape();
    e.offset = payload_.size();
    const std::size_t bytes = static_cast<std::size_t>(t.numel()) * sizeof(S);
    payload_.resize(payload_.size() + bytes);
    std::memcpy(payload_.data() + e.offset, t.data(), bytes);
    entries_.emplace(name, std::move(e));
  }

  std::vector<unsigned char> bytes() const {
    nlohmann::json header;
    header["meta"] = meta_.is_null() ? nlohmann::json::object() : meta_;
    nlohmann::json tensors = nlohmann::json::object();
    for (const auto& [name, e] : entries_) {
      nlohmann::json t;
      t["dtype"] = e.dtype;
      t["shape"] = e.shape;
      t["offset"] = e.offset;
      tensors[name] = std::move(t);
    }
    header["tensors"] = std::move(tensors);
    const std::string hs = header.dump();
    std::vector<unsigned char> out;
    out.reserve(sizeof(kArchiveMagic) + 8 + hs.size() + payload_.size());
    out.insert(out.end(), kArchiveMagic, kArchiveMagic + sizeof(kArchiveMagic));
    std::uint64_t hlen = hs.size();
    const unsigned char* hp = reinterpret_cast<const unsigned char*>(&hlen);
    out.insert(out.end(), hp, hp + 8);
    out.insert(out.end(), hs.begin(), hs.end());
    out.insert(out.end(), payload_.begin(), payload_.end());
    return out;
  }

  void save(const std::string& path) const {
    const auto buf = bytes();
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("archive: cannot open " + path + " for writing");
    f.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (!f) throw std::runtime_error("archive: short write to " + path);
  }

 private:
  struct Entry {
    std::string dtype;
    Shape shape;
    std::size_t offset = 0;
  };
  nlohmann::json meta_;
  std::map<std::string, Entry> entries_;
  std::vector<unsigned char> payload_;
};

class Archive {
 public:
  static Archive load(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("archive: cannot open " + path);
    Archive a;
    char magic[8];
    f.read(magic, 8);
    if (!f || std::memcmp(magic, kArchiveMagic, 8) != 0)
      throw std::runtime_error("archive: bad magic in " + path);
    std::uint64_t hlen = 0;
    f.read(reinterpret_cast<char*>(&hlen), 8);
    if (!f) throw std::runtime_error("archive: truncated header in " + path);
    std::string hs(hlen, '\0');
    f.read(hs.data(), static_cast<std::streamsize>(hlen));
    if (!f) throw std::runtime_error("archive: truncated header in " + path);
    a.header_ = nlohmann::json::parse(hs, nullptr, false);
    if (a.header_.is_discarded() || !a.header_.contains("tensors"))
      throw std::runtime_error("archive: corrupt header in " + path);
    a.payload_.assign(std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>());
    return a;
  }

  const nlohmann::json& meta() const { return header_.at("meta"); }

  bool has(const std::string& name) const { return header_.at("tensors").contains(name); }

  std::vector<std::string> names() const {
    std::vector<std::string> out;
    for (const auto& [k, v] : header_.at("tensors").items()) out.push_back(k);
    return out;
  }

  template <typename S>
  Tensor<S> get(const std::string& name) const {
    if (!has(name)) throw std::runtime_error("archive: missing tensor " + name);
    const auto& e = header_.at("tensors").at(name);
    if (e.at("dtype").template get<std::string>() != detail::dtype_name<S>::value)
      throw std::runtime_error("archive: dtype mismatch for " + name);
    Shape shape = e.at("shape").template get<Shape>();
    const std::size_t offset = e.at("offset").template get<std::size_t>();
    const std::size_t bytes = static_cast<std::size_t>(shape_numel(shape)) * sizeof(S);
    if (offset + bytes > payload_.size()) throw std::runtime_error("archive: truncated payload for " + name);
    Tensor<S> t(shape);
    std::memcpy(t.data(), payload_.data() + offset, bytes);
    return t;
  }

 private:
  nlohmann::json header_;
  std::vector<unsigned char> payload_;
};

}  // namespace ulfe
