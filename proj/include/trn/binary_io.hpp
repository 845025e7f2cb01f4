#pragma once

// Little-endian byte encoding shared by the feature and checkpoint formats.

#include <bit>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <iterator>
#include <string>
#include <string_view>
#include <vector>

#include "trn/error.hpp"

namespace trn::binary {

class Writer {
 public:
  void bytes(std::string_view s) { buf_.insert(buf_.end(), s.begin(), s.end()); }

  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
  }

  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }

  const std::vector<char>& data() const noexcept { return buf_; }

 private:
  std::vector<char> buf_;
};

/// Cursor over an in-memory file; every failure reports its byte offset.
class Reader {
 public:
  explicit Reader(std::vector<char> data) : buf_(std::move(data)) {}

  std::size_t offset() const noexcept { return pos_; }
  std::size_t remaining() const noexcept { return buf_.size() - pos_; }
  bool at_end() const noexcept { return pos_ == buf_.size(); }

  void expect_magic(std::string_view magic) {
    require(magic.size(), "magic");
    if (std::string_view(buf_.data() + pos_, magic.size()) != magic) {
      throw FormatError("bad magic, expected \"" + std::string(magic) + "\"", pos_);
    }
    pos_ += magic.size();
  }

  std::uint32_t u32(const char* what = "u32") {
    require(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) {
      v |= static_cast<std::uint32_t>(static_cast<unsigned char>(buf_[pos_ + i])) << (8 * i);
    }
    pos_ += 4;
    return v;
  }

  float f32(const char* what = "f32") { return std::bit_cast<float>(u32(what)); }

  /// Throws unless `count` elements of `width` bytes are still available.
  void require_elements(std::size_t count, std::size_t width, const char* what) {
    if (width != 0 && count > remaining() / width) {
      throw FormatError(std::string("truncated ") + what + ": header declares " +
                            std::to_string(count) + " values but only " +
                            std::to_string(remaining() / width) + " remain",
                        pos_);
    }
  }

 private:
  void require(std::size_t n, const char* what) {
    if (remaining() < n) throw FormatError(std::string("truncated ") + what, pos_);
  }

  std::vector<char> buf_;
  std::size_t pos_ = 0;
};

inline std::vector<char> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path + " for reading");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file(const std::string& path, const std::vector<char>& data) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out.write(data.data(), static_cast<std::streamsize>(data.size()));
  if (!out) throw IoError("failed writing " + path);
}

}  // namespace trn::binary
