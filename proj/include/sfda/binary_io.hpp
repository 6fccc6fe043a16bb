#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace sfda::io {

/// Little-endian byte sink backed by an in-memory buffer.
class ByteWriter {
public:
    void magic(std::string_view tag4);
    void u8(std::uint8_t v) { buf_.push_back(v); }
    void u32(std::uint32_t v);
    void i32(std::int32_t v) { u32(static_cast<std::uint32_t>(v)); }
    void f32(float v);
    void f64(double v);
    void zeros(std::size_t n) { buf_.insert(buf_.end(), n, 0); }

    const std::vector<std::uint8_t>& bytes() const noexcept { return buf_; }

private:
    void u64(std::uint64_t v);
    std::vector<std::uint8_t> buf_;
};

/// Little-endian reader; every failure raises FormatError with the current offset.
class ByteReader {
public:
    explicit ByteReader(std::vector<std::uint8_t> bytes) : buf_(std::move(bytes)) {}

    void expect_magic(std::string_view tag4);
    std::uint8_t u8();
    std::uint32_t u32();
    std::int32_t i32() { return static_cast<std::int32_t>(u32()); }
    float f32();
    double f64();
    void skip(std::size_t n);

    /// Throws FormatError unless at least n bytes remain; `what` names the payload.
    void require(std::size_t n, std::string_view what) const;
    void expect_end() const;

    std::size_t offset() const noexcept { return pos_; }
    std::size_t remaining() const noexcept { return buf_.size() - pos_; }

private:
    std::uint64_t u64();
    std::vector<std::uint8_t> buf_;
    std::size_t pos_ = 0;
};

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes);
void write_text(const std::filesystem::path& path, const std::string& text);

} // namespace sfda::io
