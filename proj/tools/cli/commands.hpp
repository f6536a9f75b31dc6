#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "rlalign/errors.hpp"

namespace rlalign::cli {

enum ExitCode : int {
    kOk = 0,
    kConfig = 2,
    kIo = 3,
    kNumeric = 4,
    kFormat = 5,
    kInternal = 1,
};

int exit_code_for(ErrorKind kind) noexcept;

// Full command line including the program name in args[0].
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

// Asks a running `train` to stop after the current step.
void request_stop() noexcept;
void clear_stop() noexcept;

} // namespace rlalign::cli
