#pragma once

#include <stdexcept>
#include <string>

namespace fmm {

/// Bad argument values or violated preconditions. CLI exit code 1.
class ValidationError : public std::runtime_error {
public:
    explicit ValidationError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Malformed shapes, files, or containers. CLI exit code 2.
class StructuralError : public std::runtime_error {
public:
    explicit StructuralError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Failures raised during optimization, e.g. non-finite gradients.
class TrainingError : public std::runtime_error {
public:
    explicit TrainingError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace fmm
