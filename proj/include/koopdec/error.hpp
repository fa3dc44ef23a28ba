#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace koopdec {

/// Error raised by every koopdec operation. `code` is a stable machine-readable
/// tag (e.g. "dimension_mismatch"); `what()` carries the human-readable detail.
class Error : public std::runtime_error {
   public:
    Error(std::string code, const std::string& message)
        : std::runtime_error(message), code_(std::move(code)) {}

    const std::string& code() const noexcept { return code_; }

   private:
    std::string code_;
};

namespace detail {

[[noreturn]] inline void fail(const std::string& code, const std::string& message) {
    throw Error(code, message);
}

inline void require(bool condition, const std::string& code, const std::string& message) {
    if (!condition) fail(code, message);
}

}  // namespace detail
}  // namespace koopdec
