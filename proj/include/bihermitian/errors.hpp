#pragma once

#include <stdexcept>
#include <string>

namespace bihermitian {

enum class ErrorKind {
    InvalidInput,
    NotConverged,
    Degenerate,
    Config,
    Solver,
    Io,
};

/// Every failure raised by the library carries a kind so the CLI can map it to an exit code.
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

inline void require(bool ok, ErrorKind kind, const std::string& what)
{
    if (!ok) throw Error(kind, what);
}

} // namespace bihermitian
