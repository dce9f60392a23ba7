#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace abcsmc {

// Runtime failure with a stable machine-readable code ("no-feasible-epsilon",
// "degenerate-training-set", ...). Codes are part of the public contract.
class Error : public std::runtime_error {
public:
    Error(std::string code, const std::string& msg)
        : std::runtime_error(code + ": " + msg), code_(std::move(code)) {}

    const std::string& code() const noexcept { return code_; }

private:
    std::string code_;
};

}  // namespace abcsmc
