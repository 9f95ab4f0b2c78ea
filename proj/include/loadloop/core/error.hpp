#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace loadloop {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// A payload or argument failed validation; `field` names the offending input when known.
class ValidationError : public Error {
public:
    explicit ValidationError(const std::string& message, std::string field = {})
        : Error(message), field_(std::move(field)) {}

    const std::string& field() const noexcept { return field_; }

private:
    std::string field_;
};

}  // namespace loadloop
