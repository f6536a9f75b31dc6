#pragma once

#include <stdexcept>
#include <string>

namespace rlalign {

// Failure categories. The CLI maps each one onto a fixed exit code.
enum class ErrorKind {
    Dimension,
    Bounds,
    Data,
    Config,
    Numeric,
    Format,
    Input,
    State,
    Io,
};

const char* to_string(ErrorKind kind) noexcept;

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what);
    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

#define RLALIGN_DEFINE_ERROR(Name, Kind)                                      \
    class Name : public Error {                                               \
    public:                                                                   \
        explicit Name(const std::string& what) : Error(ErrorKind::Kind, what) \
        {}                                                                    \
    };

RLALIGN_DEFINE_ERROR(DimensionError, Dimension)
RLALIGN_DEFINE_ERROR(BoundsError, Bounds)
RLALIGN_DEFINE_ERROR(DataError, Data)
RLALIGN_DEFINE_ERROR(ConfigError, Config)
RLALIGN_DEFINE_ERROR(NumericError, Numeric)
RLALIGN_DEFINE_ERROR(FormatError, Format)
RLALIGN_DEFINE_ERROR(InputError, Input)
RLALIGN_DEFINE_ERROR(StateError, State)
RLALIGN_DEFINE_ERROR(IoError, Io)

#undef RLALIGN_DEFINE_ERROR

} // namespace rlalign
