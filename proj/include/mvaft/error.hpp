#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace mvaft {

// Base for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Input data or configuration failed validation. Carries one message per
// violation so callers can report all of them at once.
class ValidationError : public Error {
public:
    explicit ValidationError(std::vector<std::string> problems);

    const std::vector<std::string>& problems() const noexcept { return problems_; }

private:
    std::vector<std::string> problems_;
};

// A truncated moment was requested above the last atom of a step CDF.
class UnrestorableTail : public Error {
public:
    using Error::Error;
};

class NumericalError : public Error {
public:
    using Error::Error;
};

}  // namespace mvaft
