#pragma once

#include <stdexcept>
#include <string>

namespace clmpt {

// Error categories; the CLI maps these to distinct exit codes.
enum class ErrorKind {
    Parse,
    Config,
    Validation,
    Shape,
    Index,
    Contract,
    Sampling,
    Training,
    Io,
};

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& msg)
        : std::runtime_error(msg), kind_(kind) {}

    ErrorKind kind() const { return kind_; }

    static Error parse(const std::string& msg) { return {ErrorKind::Parse, msg}; }
    static Error config(const std::string& msg) { return {ErrorKind::Config, msg}; }
    static Error validation(const std::string& msg) { return {ErrorKind::Validation, msg}; }
    static Error shape(const std::string& msg) { return {ErrorKind::Shape, msg}; }
    static Error index(const std::string& msg) { return {ErrorKind::Index, msg}; }
    static Error contract(const std::string& msg) { return {ErrorKind::Contract, msg}; }
    static Error sampling(const std::string& msg) { return {ErrorKind::Sampling, msg}; }
    static Error training(const std::string& msg) { return {ErrorKind::Training, msg}; }
    static Error io(const std::string& msg) { return {ErrorKind::Io, msg}; }

private:
    ErrorKind kind_;
};

const char* error_kind_name(ErrorKind kind);

} // namespace clmpt
