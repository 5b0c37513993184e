#pragma once

#include <stdexcept>
#include <string>

namespace pvolab {

/// Bad configuration: out-of-range sizes, mismatched gamma, invalid mode
/// pairings. The CLI maps this to exit code 2.
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

/// Malformed persisted artifact (demo file, snapshot, config file).
class ParseError : public std::runtime_error {
public:
    explicit ParseError(const std::string& what) : std::runtime_error(what) {}
};

/// Search over a maze failed (unreachable goal in a corrupted input).
class SearchError : public std::runtime_error {
public:
    explicit SearchError(const std::string& what) : std::runtime_error(what) {}
};

/// Non-finite values where finite ones are required (training targets).
class NumericError : public std::runtime_error {
public:
    explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

} // namespace pvolab
