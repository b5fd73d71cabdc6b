#pragma once

// Little-endian byte packing for the checkpoint and index formats.

#include <bit>
#include <cstdint>
#include <cstring>
#include <string>
#include <string_view>
#include <vector>

#include "embkit/common.hpp"

namespace embkit::binio {

class Writer {
 public:
  void bytes(std::string_view s) { buf_.insert(buf_.end(), s.begin(), s.end()); }

  template <typename T>
  void le(T value) {
    using U = std::conditional_t<sizeof(T) == 2, std::uint16_t,
              std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>>;
    U bits;
    std::memcpy(&bits, &value, sizeof(T));
    for (std::size_t i = 0; i < sizeof(T); ++i) buf_.push_back(static_cast<char>((bits >> (8 * i)) & 0xFF));
  }

  std::string take() { return {buf_.begin(), buf_.end()}; }

 private:
  std::vector<char> buf_;
};

class Reader {
 public:
  explicit Reader(std::string_view data) : data_(data) {}

  std::string_view bytes(std::size_t n, const char* what) {
    need(n, what);
    auto out = data_.substr(pos_, n);
    pos_ += n;
    return out;
  }

  template <typename T>
  T le(const char* what) {
    using U = std::conditional_t<sizeof(T) == 2, std::uint16_t,
              std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>>;
    need(sizeof(T), what);
    U bits = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i)
      bits |= static_cast<U>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
    pos_ += sizeof(T);
    T value;
    std::memcpy(&value, &bits, sizeof(T));
    return value;
  }

  std::size_t remaining() const { return data_.size() - pos_; }

 private:
  void need(std::size_t n, const char* what) const {
    if (data_.size() - pos_ < n)
      throw Error(std::string("length mismatch: truncated payload while reading ") + what);
  }

  std::string_view data_;
  std::size_t pos_ = 0;
};

}  // namespace embkit::binio
