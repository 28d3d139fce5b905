#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace ragqa {

// Base of every exception thrown by the library. `code()` is a stable
// snake_case identifier that the service and CLI put on the wire.
class Error : public std::runtime_error {
public:
    Error(std::string code, const std::string& message)
        : std::runtime_error(message), code_(std::move(code)) {}

    const std::string& code() const noexcept { return code_; }

private:
    std::string code_;
};

} // namespace ragqa
