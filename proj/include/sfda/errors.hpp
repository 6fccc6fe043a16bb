#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace sfda {

/// Caller passed a value outside an operation's domain.
class InvalidArgument : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// An API was used out of order (stale cache, step past schedule end, ...).
class ContractError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

/// Linear algebra failure, e.g. a covariance that cannot be factorized.
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// File could not be opened, read or written.
class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed binary file. Carries the byte offset at which decoding failed.
class FormatError : public std::runtime_error {
public:
    FormatError(const std::string& what, std::uint64_t offset)
        : std::runtime_error(what + " (at byte offset " + std::to_string(offset) + ")"),
          offset_(offset) {}

    std::uint64_t offset() const noexcept { return offset_; }

private:
    std::uint64_t offset_;
};

} // namespace sfda
