#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace cxrkit {

// Error families map one-to-one onto CLI exit codes.
enum class ErrorKind {
    parse = 2,
    validation = 3,
    transport = 4,
    contract = 5,
    io = 6,
};

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    ErrorKind kind() const noexcept { return kind_; }
    int exit_code() const noexcept { return static_cast<int>(kind_); }

private:
    ErrorKind kind_;
};

class ParseError : public Error {
public:
    explicit ParseError(const std::string& what, std::size_t line = 0)
        : Error(ErrorKind::parse, line ? "line " + std::to_string(line) + ": " + what : what),
          line_(line) {}
    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

class ValidationError : public Error {
public:
    explicit ValidationError(const std::string& what) : Error(ErrorKind::validation, what) {}
};

class TransportError : public Error {
public:
    TransportError(const std::string& what, bool transient = false)
        : Error(ErrorKind::transport, what), transient_(transient) {}
    bool transient() const noexcept { return transient_; }

private:
    bool transient_;
};

class ContractError : public Error {
public:
    explicit ContractError(const std::string& what) : Error(ErrorKind::contract, what) {}
};

class IoError : public Error {
public:
    explicit IoError(const std::string& what) : Error(ErrorKind::io, what) {}
};

}  // namespace cxrkit
