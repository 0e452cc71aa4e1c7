#pragma once

#include <stdexcept>
#include <string>

namespace compose {

/// Base class for every error raised by the toolkit. `name()` is the stable
/// identifier printed by the CLI and returned by the HTTP service.
class Error : public std::runtime_error {
public:
    Error(std::string name, const std::string& what)
        : std::runtime_error(what), name_(std::move(name)) {}

    const std::string& name() const noexcept { return name_; }

    /// Domain errors map to CLI exit code 2 and HTTP 422; the rest are usage
    /// or I/O problems.
    virtual bool is_domain() const noexcept { return false; }

private:
    std::string name_;
};

class InvalidArgument : public Error {
public:
    explicit InvalidArgument(const std::string& what) : Error("InvalidArgument", what) {}
};

class IoError : public Error {
public:
    explicit IoError(const std::string& what) : Error("IoError", what) {}
};

class FormatError : public Error {
public:
    explicit FormatError(const std::string& what) : Error("FormatError", what) {}
};

class DomainError : public Error {
public:
    using Error::Error;
    bool is_domain() const noexcept override { return true; }
};

// The map has no single light that stands out from its mean radiance.
class NoDominantLight : public DomainError {
public:
    explicit NoDominantLight(const std::string& what) : DomainError("NoDominantLight", what) {}
};

class EmptyEnvironment : public DomainError {
public:
    explicit EmptyEnvironment(const std::string& what) : DomainError("EmptyEnvironment", what) {}
};

}  // namespace compose
