#include "rlalign/errors.hpp"

namespace rlalign {

const char* to_string(ErrorKind kind) noexcept
{
    switch (kind) {
    case ErrorKind::Dimension: return "dimension error";
    case ErrorKind::Bounds: return "bounds error";
    case ErrorKind::Data: return "data error";
    case ErrorKind::Config: return "config error";
    case ErrorKind::Numeric: return "numeric error";
    case ErrorKind::Format: return "format error";
    case ErrorKind::Input: return "input error";
    case ErrorKind::State: return "state error";
    case ErrorKind::Io: return "I/O error";
    }
    return "error";
}

Error::Error(ErrorKind kind, const std::string& what)
    : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind)
{}

} // namespace rlalign
