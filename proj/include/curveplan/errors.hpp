#pragma once

#include <stdexcept>
#include <string>

namespace curveplan {

// Error taxonomy mirrors the CLI exit-code contract:
//   usage (1) -> bad flags or inconsistent configuration
//   input (2) -> unreadable, malformed, or contract-violating input data
//   internal (3) -> broken invariants inside the toolkit
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct UsageError : Error {
    using Error::Error;
};

struct InputError : Error {
    using Error::Error;
};

struct InternalError : Error {
    using Error::Error;
};

// Re-throws the active exception with a stage prefix so pipeline failures
// name the stage that produced them.
[[noreturn]] inline void rethrow_with_stage(const std::string& stage) {
    try {
        throw;
    } catch (const UsageError& e) {
        throw UsageError("[" + stage + "] " + e.what());
    } catch (const InputError& e) {
        throw InputError("[" + stage + "] " + e.what());
    } catch (const InternalError& e) {
        throw InternalError("[" + stage + "] " + e.what());
    } catch (const std::exception& e) {
        throw InternalError("[" + stage + "] " + e.what());
    }
}

}  // namespace curveplan
