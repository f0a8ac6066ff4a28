#pragma once

#include <stdexcept>
#include <string>

namespace pnx {

// Process exit codes used by the CLI. Library code throws the matching
// exception type; main() translates.
enum ExitCode : int {
    kExitOk = 0,
    kExitUsage = 2,
    kExitData = 3,
    kExitNumeric = 4,
};

// Bad flags, invalid config keys, out-of-range command arguments.
class UsageError : public std::runtime_error {
public:
    explicit UsageError(const std::string& msg) : std::runtime_error(msg) {}
};

// Broken or inconsistent input data: missing files, malformed manifests,
// checkpoint mismatches, violated data preconditions.
class DataError : public std::runtime_error {
public:
    explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

// Non-finite values where finite ones are required (e.g. training loss).
class NumericError : public std::runtime_error {
public:
    explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

// Internal contract violations (shape mismatches between modules and the
// like). These indicate a programming error, not bad user input.
class InvariantError : public std::logic_error {
public:
    explicit InvariantError(const std::string& msg) : std::logic_error(msg) {}
};

inline void check(bool cond, const std::string& msg) {
    if (!cond) throw InvariantError(msg);
}

}  // namespace pnx
