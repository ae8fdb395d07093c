// Copyright 2026 The mrkit Authors
// SPDX-License-Identifier: Apache-2.0

#include "mrkit/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>

namespace mrkit::engine {

namespace {

constexpr char kMagic[4] = {'M', 'R', 'C', 'K'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put(std::string& buf, T value) {
  static_assert(std::is_integral_v<T>);
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    buf.push_back(static_cast<char>((static_cast<std::uint64_t>(value) >> (8 * i)) & 0xff));
  }
}

void put_f64(std::string& buf, double value) {
  std::uint64_t bits;
  std::memcpy(&bits, &value, sizeof(bits));
  put(buf, bits);
}

class ByteReader {
 public:
  ByteReader(const std::string& data, const std::string& path)
      : data_(data), path_(path) {}

  template <typename T>
  T get() {
    static_assert(std::is_integral_v<T>);
    need(sizeof(T));
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
    }
    pos_ += sizeof(T);
    return static_cast<T>(v);
  }

  double get_f64() {
    const std::uint64_t bits = get<std::uint64_t>();
    double v;
    std::memcpy(&v, &bits, sizeof(v));
    return v;
  }

  std::string get_string(std::size_t n) {
    need(n);
    std::string s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  bool exhausted() const { return pos_ == data_.size(); }

 private:
  void need(std::size_t n) {
    if (pos_ + n > data_.size()) {
      throw Error(ErrorKind::kCorruptCheckpoint,
                  path_ + ": truncated at byte " + std::to_string(pos_));
    }
  }

  const std::string& data_;
  std::string path_;
  std::size_t pos_ = 0;
};

}  // namespace

void write_checkpoint(const std::string& path,
                      const std::vector<NamedTensor>& tensors) {
  std::string buf;
  buf.append(kMagic, sizeof(kMagic));
  put<std::uint32_t>(buf, kVersion);
  put<std::uint64_t>(buf, tensors.size());
  for (const NamedTensor& nt : tensors) {
    put<std::uint32_t>(buf, static_cast<std::uint32_t>(nt.name.size()));
    buf.append(nt.name);
    put<std::uint8_t>(buf, static_cast<std::uint8_t>(nt.tensor.dtype()));
    put<std::uint32_t>(buf, static_cast<std::uint32_t>(nt.tensor.rank()));
    for (std::int64_t d : nt.tensor.shape()) put<std::int64_t>(buf, d);
    if (nt.tensor.dtype() == DType::kF64) {
      for (double v : nt.tensor.f64()) put_f64(buf, v);
    } else {
      for (std::int64_t v : nt.tensor.i64()) put<std::int64_t>(buf, v);
    }
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw Error(ErrorKind::kIoError, "cannot write " + path);
  }
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
}

std::vector<NamedTensor> read_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw Error(ErrorKind::kCorruptCheckpoint, path + ": missing file");
  }
  std::string data((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());
  ByteReader r(data, path);
  if (r.get_string(sizeof(kMagic)) != std::string(kMagic, sizeof(kMagic))) {
    throw Error(ErrorKind::kCorruptCheckpoint, path + ": bad magic");
  }
  const auto version = r.get<std::uint32_t>();
  if (version != kVersion) {
    throw Error(ErrorKind::kVersionMismatch,
                path + ": checkpoint version " + std::to_string(version) +
                    ", expected " + std::to_string(kVersion));
  }
  const auto count = r.get<std::uint64_t>();
  std::vector<NamedTensor> tensors;
  tensors.reserve(count);
  for (std::uint64_t t = 0; t < count; ++t) {
    const auto name_len = r.get<std::uint32_t>();
    std::string name = r.get_string(name_len);
    const auto dtype_raw = r.get<std::uint8_t>();
    if (dtype_raw > 1) {
      throw Error(ErrorKind::kCorruptCheckpoint,
                  path + ": unknown dtype for tensor " + name);
    }
    const auto dtype = static_cast<DType>(dtype_raw);
    const auto rank = r.get<std::uint32_t>();
    Shape shape(rank);
    for (auto& d : shape) {
      d = r.get<std::int64_t>();
      if (d < 0) {
        throw Error(ErrorKind::kCorruptCheckpoint,
                    path + ": negative dim for tensor " + name);
      }
    }
    const std::int64_t numel = shape_numel(shape);
    if (dtype == DType::kF64) {
      std::vector<double> values(static_cast<std::size_t>(numel));
      for (auto& v : values) v = r.get_f64();
      tensors.push_back({std::move(name), Tensor::from_f64(std::move(shape), std::move(values))});
    } else {
      std::vector<std::int64_t> values(static_cast<std::size_t>(numel));
      for (auto& v : values) v = r.get<std::int64_t>();
      tensors.push_back({std::move(name), Tensor::from_i64(std::move(shape), std::move(values))});
    }
  }
  if (!r.exhausted()) {
    throw Error(ErrorKind::kCorruptCheckpoint, path + ": trailing bytes");
  }
  return tensors;
}

}  // namespace mrkit::engine
