#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace tagsync {

// Base error for everything the library throws on purpose. The CLI maps
// subclasses onto exit codes, so keep the hierarchy flat.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ParseError : public Error {
public:
    ParseError(const std::string& what, std::size_t line)
        : Error(what + " (line " + std::to_string(line) + ")"), line_(line) {}
    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

class ValidationError : public Error { using Error::Error; };
class RangeError : public Error { using Error::Error; };
class IoError : public Error { using Error::Error; };
class ConfigError : public Error { using Error::Error; };
class CapacityError : public Error { using Error::Error; };
class InsufficientDataError : public Error { using Error::Error; };
class ResolutionError : public Error { using Error::Error; };
class FitError : public Error { using Error::Error; };
class NoPeakError : public FitError { using FitError::FitError; };
class ShapeError : public Error { using Error::Error; };
class DegenerateStatisticsError : public Error { using Error::Error; };
class DomainError : public Error { using Error::Error; };

} // namespace tagsync
