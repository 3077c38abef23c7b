#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <iterator>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace eegcrnn {

class FormatError : public std::runtime_error {
 public:
  enum class Kind { BadMagic, Truncated, VersionMismatch, Corrupt, ShapeMismatch };
  FormatError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

namespace io {

// Little-endian encoding regardless of host order.
template <std::unsigned_integral U>
void put(std::ostream& out, U v) {
  unsigned char bytes[sizeof(U)];
  for (std::size_t i = 0; i < sizeof(U); ++i) bytes[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(bytes), sizeof(U));
}

inline void put_f32(std::ostream& out, float v) { put(out, std::bit_cast<std::uint32_t>(v)); }
inline void put_f64(std::ostream& out, double v) { put(out, std::bit_cast<std::uint64_t>(v)); }

// Sequential reader over an in-memory buffer; every read is bounds-checked
// and reports truncation with the field being read.
class Reader {
 public:
  explicit Reader(std::vector<char> buffer) : buf_(std::move(buffer)) {}

  template <std::unsigned_integral U>
  U get(const char* field) {
    need(sizeof(U), field);
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(static_cast<unsigned char>(buf_[pos_ + i])) << (8 * i);
    pos_ += sizeof(U);
    return v;
  }
  float get_f32(const char* field) { return std::bit_cast<float>(get<std::uint32_t>(field)); }
  double get_f64(const char* field) { return std::bit_cast<double>(get<std::uint64_t>(field)); }

  std::string bytes(std::size_t n, const char* field) {
    need(n, field);
    std::string s(buf_.data() + pos_, n);
    pos_ += n;
    return s;
  }

  std::size_t remaining() const { return buf_.size() - pos_; }

  void need(std::size_t n, const char* field) const {
    if (buf_.size() - pos_ < n) {
      throw FormatError(FormatError::Kind::Truncated, std::string("file truncated while reading ") + field);
    }
  }

 private:
  std::vector<char> buf_;
  std::size_t pos_ = 0;
};

inline std::vector<char> slurp(std::istream& in) {
  return std::vector<char>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

}  // namespace io
}  // namespace eegcrnn
