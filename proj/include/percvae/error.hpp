#pragma once

#include <stdexcept>
#include <string>

namespace percvae {

enum class ErrorKind {
    shape,
    invalid_support,
    contract,
    domain,
    parse,
    io,
    config,
    load,
    divergence,
    undefined_metric,
    invalid_request,
};

const char* to_string(ErrorKind kind) noexcept;

/// Single exception type for the library; the kind maps onto C API status codes.
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message)
        : std::runtime_error(message), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
    throw Error(kind, message);
}

}  // namespace percvae
