#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace nlch {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Two fields (or a field and a plan) live on different grids.
class GridMismatch : public Error {
public:
    using Error::Error;
};

/// A scalar function was evaluated outside its domain of definition.
class DomainError : public Error {
public:
    using Error::Error;
};

/// Invalid or inconsistent configuration. Carries every problem found, each
/// prefixed with the key path it refers to.
class ConfigError : public Error {
public:
    explicit ConfigError(std::vector<std::string> problems)
        : Error(join(problems)), problems_(std::move(problems)) {}
    explicit ConfigError(const std::string& problem)
        : ConfigError(std::vector<std::string>{problem}) {}

    const std::vector<std::string>& problems() const noexcept { return problems_; }

private:
    static std::string join(const std::vector<std::string>& p) {
        std::string out;
        for (const auto& s : p) {
            if (!out.empty()) out += "; ";
            out += s;
        }
        return out;
    }
    std::vector<std::string> problems_;
};

/// Iterative solver breakdown, Newton non-convergence, non-finite values.
class NumericalError : public Error {
public:
    NumericalError(const std::string& what, double residual = 0.0)
        : Error(what), residual_(residual) {}
    double residual() const noexcept { return residual_; }

private:
    double residual_;
};

/// Malformed or truncated field files.
class IoError : public Error {
public:
    using Error::Error;
};

}  // namespace nlch
