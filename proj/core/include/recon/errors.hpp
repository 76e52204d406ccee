#pragma once

#include <stdexcept>
#include <string>

namespace recon {

// Error codes cover every failure the library reports. The CLI maps
// io_error to exit 1 and everything else to exit 2.
enum class Errc {
    space_too_large,
    unknown_node,
    inadmissible_configuration,
    schema_violation,
    empty_corpus,
    unknown_label,
    incomplete_dependency_model,
    degenerate_prior,
    out_of_range,
    malformed_row,
    unknown_field,
    domain_violation,
    invalid_argument,
    format_error,
    io_error,
};

const char* errc_name(Errc code) noexcept;

class Error : public std::runtime_error {
public:
    Error(Errc code, const std::string& message)
        : std::runtime_error(std::string(errc_name(code)) + ": " + message), code_(code),
          detail_(message) {}

    Errc code() const noexcept { return code_; }
    // The message without the error-name prefix, for re-wrapping with context.
    const std::string& detail() const noexcept { return detail_; }

private:
    Errc code_;
    std::string detail_;
};

[[noreturn]] inline void raise(Errc code, const std::string& message) {
    throw Error(code, message);
}

} // namespace recon
