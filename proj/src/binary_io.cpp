#include "sfda/binary_io.hpp"

#include "sfda/errors.hpp"

#include <bit>
#include <fstream>
#include <iterator>

namespace sfda::io {

void ByteWriter::magic(std::string_view tag4) {
    for (char c : tag4) {
        buf_.push_back(static_cast<std::uint8_t>(c));
    }
}

void ByteWriter::u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) {
        buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
}

void ByteWriter::u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) {
        buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
}

void ByteWriter::f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
void ByteWriter::f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }

void ByteReader::require(std::size_t n, std::string_view what) const {
    if (remaining() < n) {
        throw FormatError("truncated payload: need " + std::to_string(n) + " bytes for " +
                              std::string(what) + ", " + std::to_string(remaining()) + " left",
                          pos_);
    }
}

void ByteReader::expect_magic(std::string_view tag4) {
    require(tag4.size(), "magic");
    const std::size_t at = pos_;
    for (char c : tag4) {
        if (buf_[pos_++] != static_cast<std::uint8_t>(c)) {
            throw FormatError("bad magic, expected \"" + std::string(tag4) + "\"", at);
        }
    }
}

std::uint8_t ByteReader::u8() {
    require(1, "u8");
    return buf_[pos_++];
}

std::uint32_t ByteReader::u32() {
    require(4, "u32");
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) {
        v |= static_cast<std::uint32_t>(buf_[pos_++]) << (8 * i);
    }
    return v;
}

std::uint64_t ByteReader::u64() {
    require(8, "u64");
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) {
        v |= static_cast<std::uint64_t>(buf_[pos_++]) << (8 * i);
    }
    return v;
}

float ByteReader::f32() { return std::bit_cast<float>(u32()); }
double ByteReader::f64() { return std::bit_cast<double>(u64()); }

void ByteReader::skip(std::size_t n) {
    require(n, "padding");
    pos_ += n;
}

void ByteReader::expect_end() const {
    if (remaining() != 0) {
        throw FormatError(std::to_string(remaining()) + " unexpected trailing bytes", pos_);
    }
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open " + path.string() + " for reading");
    }
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                    std::istreambuf_iterator<char>());
    if (in.bad()) {
        throw IoError("read failure on " + path.string());
    }
    return bytes;
}

void write_file(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw IoError("cannot open " + path.string() + " for writing");
    }
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) {
        throw IoError("write failure on " + path.string());
    }
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw IoError("cannot open " + path.string() + " for writing");
    }
    out << text;
    if (!out) {
        throw IoError("write failure on " + path.string());
    }
}

} // namespace sfda::io
