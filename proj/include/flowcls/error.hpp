#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace flowcls {

enum class ErrorKind {
    unsupported_format,
    truncated_capture,
    unsupported_linktype,
    decode_error,
    truncated_frame,
    invalid_argument,
    config_error,
    stratification_error,
    leakage_error,
    lineage_error,
    transform_mismatch,
    value_error,
    fit_error,
    shape_error,
    undefined_metric,
    unsupported_model,
    io_error,
};

std::string_view to_string(ErrorKind kind) noexcept;

/// Base exception for every failure raised by the toolkit. The module tag
/// ("ingest", "meter", ...) is prefixed to the message.
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, std::string_view module, const std::string& message);

    ErrorKind kind() const noexcept { return kind_; }
    const std::string& module() const noexcept { return module_; }

    /// True for errors caused by bad configuration or lineage rather than
    /// by the data itself.
    bool is_validation_error() const noexcept;

private:
    ErrorKind kind_;
    std::string module_;
};

/// Raised while decoding capture bytes; carries the byte offset of the fault.
class DecodeError : public Error {
public:
    DecodeError(ErrorKind kind, std::string_view module, const std::string& message,
                std::uint64_t offset);

    std::uint64_t offset() const noexcept { return offset_; }

private:
    std::uint64_t offset_;
};

}  // namespace flowcls
