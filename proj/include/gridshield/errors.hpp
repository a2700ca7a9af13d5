#pragma once

#include <stdexcept>
#include <string>

namespace gridshield {

// Error categories map onto CLI exit codes: usage=1, data=2, numerical=3.
enum class ErrorKind { usage, data, numerical };

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, std::string msg)
        : std::runtime_error(std::move(msg)), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

inline Error data_error(std::string msg) { return Error(ErrorKind::data, std::move(msg)); }
inline Error numerical_error(std::string msg) { return Error(ErrorKind::numerical, std::move(msg)); }
inline Error usage_error(std::string msg) { return Error(ErrorKind::usage, std::move(msg)); }

}  // namespace gridshield
