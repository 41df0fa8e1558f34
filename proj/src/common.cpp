#include "phyc/common.hpp"

namespace phyc {

const char* errc_name(Errc c) {
    switch (c) {
    case Errc::shape_mismatch: return "shape_mismatch";
    case Errc::non_finite: return "non_finite";
    case Errc::unsupported_primitive: return "unsupported_primitive";
    case Errc::degenerate_input: return "degenerate_input";
    case Errc::length_mismatch: return "length_mismatch";
    case Errc::unknown_name: return "unknown_name";
    case Errc::invalid_argument: return "invalid_argument";
    case Errc::out_of_range: return "out_of_range";
    case Errc::io_error: return "io_error";
    case Errc::format_error: return "format_error";
    case Errc::state_error: return "state_error";
    }
    return "unknown";
}

} // namespace phyc
