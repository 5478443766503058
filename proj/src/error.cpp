#include "flowcls/error.hpp"

namespace flowcls {

std::string_view to_string(ErrorKind kind) noexcept {
    switch (kind) {
        case ErrorKind::unsupported_format: return "unsupported-format";
        case ErrorKind::truncated_capture: return "truncated-capture";
        case ErrorKind::unsupported_linktype: return "unsupported-linktype";
        case ErrorKind::decode_error: return "decode-error";
        case ErrorKind::truncated_frame: return "truncated-frame";
        case ErrorKind::invalid_argument: return "invalid-argument";
        case ErrorKind::config_error: return "config-error";
        case ErrorKind::stratification_error: return "stratification-error";
        case ErrorKind::leakage_error: return "leakage-error";
        case ErrorKind::lineage_error: return "lineage-error";
        case ErrorKind::transform_mismatch: return "transform-mismatch";
        case ErrorKind::value_error: return "value-error";
        case ErrorKind::fit_error: return "fit-error";
        case ErrorKind::shape_error: return "shape-error";
        case ErrorKind::undefined_metric: return "undefined-metric";
        case ErrorKind::unsupported_model: return "unsupported-model";
        case ErrorKind::io_error: return "io-error";
    }
    return "unknown";
}

Error::Error(ErrorKind kind, std::string_view module, const std::string& message)
    : std::runtime_error(std::string(module) + ": " + std::string(to_string(kind)) + ": " +
                         message),
      kind_(kind),
      module_(module) {}

bool Error::is_validation_error() const noexcept {
    switch (kind_) {
        case ErrorKind::invalid_argument:
        case ErrorKind::config_error:
        case ErrorKind::stratification_error:
        case ErrorKind::leakage_error:
        case ErrorKind::lineage_error:
        case ErrorKind::transform_mismatch:
        case ErrorKind::unsupported_model:
            return true;
        default:
            return false;
    }
}

DecodeError::DecodeError(ErrorKind kind, std::string_view module, const std::string& message,
                         std::uint64_t offset)
    : Error(kind, module, message + " at offset " + std::to_string(offset)), offset_(offset) {}

}  // namespace flowcls
