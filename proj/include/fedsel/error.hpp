#pragma once

#include <stdexcept>
#include <string>

namespace fedsel {

/// Base of every error raised by the library. Callers that only need to
/// report and exit can catch this; tests match on the concrete subclasses.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

/// Malformed input file. `line` is 1-based, 0 when not tied to a line.
class ParseError : public Error {
public:
    ParseError(const std::string& what, std::size_t line = 0)
        : Error(line == 0 ? what : "line " + std::to_string(line) + ": " + what), line_(line) {}
    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

class PartitionError : public Error {
public:
    using Error::Error;
};

class IntegrityError : public Error {
public:
    using Error::Error;
};

class TrainingError : public Error {
public:
    TrainingError(const std::string& what, int client_id, std::size_t round = 0)
        : Error(what), client_id_(client_id), round_(round) {}
    int client_id() const noexcept { return client_id_; }
    std::size_t round() const noexcept { return round_; }

private:
    int client_id_;
    std::size_t round_;
};

class AggregationError : public Error {
public:
    using Error::Error;
};

class SelectionError : public Error {
public:
    using Error::Error;
};

}  // namespace fedsel
