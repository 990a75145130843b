#pragma once

#include <stdexcept>
#include <string>

namespace scribe {

// Base class for all library errors that are faults (bad files, failed
// backends, broken invariants). Precondition violations on in-memory
// arguments use std::invalid_argument instead.
class ScribeError : public std::runtime_error {
public:
    explicit ScribeError(const std::string& msg) : std::runtime_error(msg) {}
};

class IoError : public ScribeError {
public:
    explicit IoError(const std::string& msg) : ScribeError("io error: " + msg) {}
};

class ParseError : public ScribeError {
public:
    explicit ParseError(const std::string& msg) : ScribeError("parse error: " + msg) {}
};

class ValidationError : public ScribeError {
public:
    explicit ValidationError(const std::string& msg) : ScribeError("validation error: " + msg) {}
};

class BackendError : public ScribeError {
public:
    explicit BackendError(const std::string& msg) : ScribeError("backend error: " + msg) {}
};

class BudgetError : public ScribeError {
public:
    explicit BudgetError(const std::string& msg) : ScribeError("budget exceeded: " + msg) {}
};

class HashMismatchError : public ScribeError {
public:
    explicit HashMismatchError(const std::string& msg) : ScribeError("hash mismatch: " + msg) {}
};

class ConfigError : public ScribeError {
public:
    explicit ConfigError(const std::string& msg) : ScribeError("config error: " + msg) {}
};

}  // namespace scribe
