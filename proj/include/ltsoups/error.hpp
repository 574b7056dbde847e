#pragma once

#include <stdexcept>
#include <string>

namespace ltsoups {

enum class Errc {
  invalid_spec,
  degenerate_split,
  schedule_exceeds_data,
  shape_mismatch,
  layout_mismatch,
  empty_input,
  missing_class,
  non_finite_input,
  rank_too_large,
  diverged,
  parse_error,
  validation_error,
  io_error,
  format_error,
};

const char* errc_name(Errc code);

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what);

  Errc code() const noexcept { return code_; }
  // The message without the code prefix.
  const std::string& detail() const noexcept { return detail_; }

 private:
  Errc code_;
  std::string detail_;
};

// Process exit code for the command-line tool: 2 validation, 3 divergence, 4 I/O.
int exit_code_for(Errc code);

[[noreturn]] void fail(Errc code, const std::string& what);

}  // namespace ltsoups
