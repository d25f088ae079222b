#pragma once

#include <stdexcept>
#include <string>

namespace semrsa {

enum class ErrorKind { validation, dimension, numeric, convergence, io };

/// Base of every error raised by the library. Carries the module that raised
/// it so the CLI can report (code, module, detail) triples.
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, std::string module, const std::string& detail)
        : std::runtime_error(module + ": " + detail),
          kind_(kind), module_(std::move(module)), detail_(detail) {}

    ErrorKind kind() const noexcept { return kind_; }
    const std::string& module() const noexcept { return module_; }
    const std::string& detail() const noexcept { return detail_; }

private:
    ErrorKind kind_;
    std::string module_;
    std::string detail_;
};

class ValidationError : public Error {
public:
    ValidationError(std::string module, const std::string& detail)
        : Error(ErrorKind::validation, std::move(module), detail) {}
};

class DimensionError : public Error {
public:
    DimensionError(std::string module, const std::string& detail)
        : Error(ErrorKind::dimension, std::move(module), detail) {}
};

class NumericError : public Error {
public:
    NumericError(std::string module, const std::string& detail)
        : Error(ErrorKind::numeric, std::move(module), detail) {}
};

class ConvergenceError : public Error {
public:
    ConvergenceError(std::string module, const std::string& detail, double residual)
        : Error(ErrorKind::convergence, std::move(module), detail), residual_(residual) {}
    double residual() const noexcept { return residual_; }

private:
    double residual_;
};

class IoError : public Error {
public:
    IoError(std::string module, const std::string& detail)
        : Error(ErrorKind::io, std::move(module), detail) {}
};

const char* to_string(ErrorKind kind) noexcept;

}  // namespace semrsa
