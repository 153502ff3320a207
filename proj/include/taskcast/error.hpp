#pragma once

#include <stdexcept>
#include <string>

namespace taskcast {

// Domain failures (bad data, failed fits, unreachable endpoints). The CLI maps
// these to exit code 1.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// A line of a JSONL file could not be parsed.
class ParseError : public Error {
public:
    ParseError(const std::string& path, std::size_t line, const std::string& what)
        : Error(path + ":" + std::to_string(line) + ": " + what), line_(line) {}

    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

// Well-formed JSON that violates a record's schema or invariants.
class SchemaError : public Error {
public:
    using Error::Error;
};

// Misuse of the command line. The CLI maps these to exit code 2.
class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace taskcast
