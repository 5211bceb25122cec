#pragma once

#include <stdexcept>
#include <string>

namespace fnm {

// Base of every error thrown by the library. The CLI maps subclasses onto
// exit codes, so keep the hierarchy shallow.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class InvalidInput : public Error {
public:
    using Error::Error;
};

class MissingScaleFactor : public Error {
public:
    explicit MissingScaleFactor(const std::string& category)
        : Error("no scale factor configured for category '" + category + "'"), category_(category) {}
    const std::string& category() const noexcept { return category_; }

private:
    std::string category_;
};

class UnknownCategory : public Error {
public:
    explicit UnknownCategory(const std::string& category)
        : Error("unknown category '" + category + "'"), category_(category) {}
    const std::string& category() const noexcept { return category_; }

private:
    std::string category_;
};

class UndefinedMetric : public Error {
public:
    using Error::Error;
};

class ParseError : public Error {
public:
    using Error::Error;
};

class VersionMismatch : public Error {
public:
    VersionMismatch(int expected, int found)
        : Error("schema version mismatch: expected " + std::to_string(expected) + ", found " +
                std::to_string(found)),
          expected_(expected), found_(found) {}
    int expected() const noexcept { return expected_; }
    int found() const noexcept { return found_; }

private:
    int expected_;
    int found_;
};

} // namespace fnm
