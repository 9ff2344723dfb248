// Copyright 2026 The prefnet Authors
// SPDX-License-Identifier: Apache-2.0

#include "prefnet/core/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <fstream>
#include <limits>
#include <random>
#include <sstream>

#include "prefnet/core/error.hpp"

namespace prefnet {

namespace {

void put_u8(std::string& out, std::uint8_t v) { out.push_back(static_cast<char>(v)); }

void put_u16(std::string& out, std::uint16_t v) {
  for (int i = 0; i < 2; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}

  std::uint64_t uint(std::size_t width, const char* field) {
    need(width, field);
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < width; ++i) {
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    }
    pos_ += width;
    return v;
  }

  std::string raw(std::size_t n, const char* field) {
    need(n, field);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  bool at_end() const { return pos_ == bytes_.size(); }
  std::size_t pos() const { return pos_; }

 private:
  void need(std::size_t n, const char* field) const {
    if (bytes_.size() - pos_ < n) {
      throw FormatError(std::string("checkpoint truncated while reading ") + field +
                        " at byte " + std::to_string(pos_));
    }
  }

  const std::string& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string encode_checkpoint(const std::vector<StoredTensor>& tensors) {
  std::string out = "PREF";
  put_u32(out, kCheckpointVersion);
  put_u32(out, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& t : tensors) {
    if (t.name.size() > std::numeric_limits<std::uint16_t>::max()) {
      throw ValidationError("checkpoint: tensor name too long: " + t.name.substr(0, 32) + "...");
    }
    if (t.shape.size() > std::numeric_limits<std::uint8_t>::max()) {
      throw ValidationError("checkpoint: rank too large for " + t.name);
    }
    put_u16(out, static_cast<std::uint16_t>(t.name.size()));
    out += t.name;
    const bool is_f32 = std::holds_alternative<std::vector<float>>(t.values);
    put_u8(out, is_f32 ? 0 : 1);
    put_u8(out, static_cast<std::uint8_t>(t.shape.size()));
    for (auto e : t.shape) {
      if (e > std::numeric_limits<std::uint32_t>::max()) {
        throw ValidationError("checkpoint: extent too large for " + t.name);
      }
      put_u32(out, static_cast<std::uint32_t>(e));
    }
    if (is_f32) {
      const auto& v = std::get<std::vector<float>>(t.values);
      if (v.size() != shape_numel(t.shape)) throw ShapeError("checkpoint: size mismatch for " + t.name);
      for (float f : v) put_u32(out, std::bit_cast<std::uint32_t>(f));
    } else {
      const auto& v = std::get<std::vector<double>>(t.values);
      if (v.size() != shape_numel(t.shape)) throw ShapeError("checkpoint: size mismatch for " + t.name);
      for (double d : v) put_u64(out, std::bit_cast<std::uint64_t>(d));
    }
  }
  return out;
}

std::vector<StoredTensor> decode_checkpoint(const std::string& bytes) {
  Reader r(bytes);
  if (r.raw(4, "magic") != "PREF") throw FormatError("checkpoint: bad magic (expected PREF)");
  const auto version = r.uint(4, "version");
  if (version != kCheckpointVersion) {
    throw FormatError("checkpoint: unsupported version " + std::to_string(version));
  }
  const auto count = r.uint(4, "tensor count");
  std::vector<StoredTensor> out;
  for (std::uint64_t i = 0; i < count; ++i) {
    StoredTensor t;
    t.name = r.raw(r.uint(2, "name length"), "name");
    const auto dtype = r.uint(1, "dtype");
    if (dtype > 1) {
      throw FormatError("checkpoint: unknown dtype code " + std::to_string(dtype) + " for " + t.name);
    }
    const auto rank = r.uint(1, "rank");
    for (std::uint64_t d = 0; d < rank; ++d) t.shape.push_back(r.uint(4, "extent"));
    const std::size_t n = shape_numel(t.shape);
    if (dtype == 0) {
      std::vector<float> v(n);
      for (auto& f : v) f = std::bit_cast<float>(static_cast<std::uint32_t>(r.uint(4, "f32 value")));
      t.values = std::move(v);
    } else {
      std::vector<double> v(n);
      for (auto& d : v) d = std::bit_cast<double>(r.uint(8, "f64 value"));
      t.values = std::move(v);
    }
    out.push_back(std::move(t));
  }
  if (!r.at_end()) {
    throw FormatError("checkpoint: trailing bytes after byte " + std::to_string(r.pos()));
  }
  return out;
}

void atomic_write_file(const std::filesystem::path& path, const std::string& contents) {
  std::random_device rd;
  auto tmp = path;
  tmp += ".tmp" + std::to_string(rd());
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw Error("cannot open " + tmp.string() + " for writing");
    f.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    f.flush();
    if (!f) {
      std::filesystem::remove(tmp);
      throw Error("write failed: " + tmp.string());
    }
  }
  std::filesystem::rename(tmp, path);
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error("cannot open " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

void write_checkpoint(const std::filesystem::path& path, const std::vector<StoredTensor>& tensors) {
  atomic_write_file(path, encode_checkpoint(tensors));
}

std::vector<StoredTensor> read_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(read_file(path));
}

template <typename T>
std::vector<StoredTensor> snapshot(const ParameterList<T>& list) {
  std::vector<StoredTensor> out;
  auto add = [&](const NamedTensor<T>& nt) {
    auto d = nt.tensor.data();
    out.push_back({nt.name, nt.tensor.shape(), std::vector<T>(d.begin(), d.end())});
  };
  for (const auto& p : list.params) add(p);
  for (const auto& b : list.buffers) add(b);
  return out;
}

template <typename T>
void restore(const ParameterList<T>& list, const std::vector<StoredTensor>& stored) {
  auto apply = [&](const NamedTensor<T>& nt) {
    auto it = std::find_if(stored.begin(), stored.end(),
                           [&](const StoredTensor& s) { return s.name == nt.name; });
    if (it == stored.end()) throw FormatError("checkpoint lacks tensor '" + nt.name + "'");
    if (it->shape != nt.tensor.shape()) {
      throw ShapeError("checkpoint tensor '" + nt.name + "' has shape " + shape_str(it->shape) +
                       ", model expects " + shape_str(nt.tensor.shape()));
    }
    Tensor<T> dst = nt.tensor;
    auto out = dst.data();
    std::visit(
        [&](const auto& values) {
          for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<T>(values[i]);
        },
        it->values);
  };
  for (const auto& p : list.params) apply(p);
  for (const auto& b : list.buffers) apply(b);
}

template std::vector<StoredTensor> snapshot(const ParameterList<float>&);
template std::vector<StoredTensor> snapshot(const ParameterList<double>&);
template void restore(const ParameterList<float>&, const std::vector<StoredTensor>&);
template void restore(const ParameterList<double>&, const std::vector<StoredTensor>&);

}  // namespace prefnet
