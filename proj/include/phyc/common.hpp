#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace phyc {

enum class Errc {
    shape_mismatch,
    non_finite,
    unsupported_primitive,
    degenerate_input,
    length_mismatch,
    unknown_name,
    invalid_argument,
    out_of_range,
    io_error,
    format_error,
    state_error,
};

const char* errc_name(Errc c);

// All contract violations surface as Error; `code` keys the machine-parsable
// CLI output ("error: <code> <message>").
class Error : public std::runtime_error {
public:
    Error(Errc code, const std::string& msg)
        : std::runtime_error(std::string(errc_name(code)) + " " + msg), code_(code), msg_(msg) {}

    Errc code() const { return code_; }
    const std::string& message() const { return msg_; }

private:
    Errc code_;
    std::string msg_;
};

[[noreturn]] inline void fail(Errc code, const std::string& msg) { throw Error(code, msg); }

} // namespace phyc
