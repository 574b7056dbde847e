#include "ltsoups/error.hpp"

namespace ltsoups {

const char* errc_name(Errc code) {
  switch (code) {
    case Errc::invalid_spec: return "invalid-spec";
    case Errc::degenerate_split: return "degenerate-split";
    case Errc::schedule_exceeds_data: return "schedule-exceeds-data";
    case Errc::shape_mismatch: return "shape-mismatch";
    case Errc::layout_mismatch: return "layout-mismatch";
    case Errc::empty_input: return "empty-input";
    case Errc::missing_class: return "missing-class";
    case Errc::non_finite_input: return "non-finite-input";
    case Errc::rank_too_large: return "rank-too-large";
    case Errc::diverged: return "diverged";
    case Errc::parse_error: return "parse-error";
    case Errc::validation_error: return "validation-error";
    case Errc::io_error: return "io-error";
    case Errc::format_error: return "format-error";
  }
  return "unknown";
}

Error::Error(Errc code, const std::string& what)
    : std::runtime_error(std::string(errc_name(code)) + ": " + what), code_(code), detail_(what) {}

int exit_code_for(Errc code) {
  switch (code) {
    case Errc::diverged: return 3;
    case Errc::io_error:
    case Errc::format_error: return 4;
    default: return 2;
  }
}

void fail(Errc code, const std::string& what) { throw Error(code, what); }

}  // namespace ltsoups
