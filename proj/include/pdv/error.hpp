#pragma once

#include <stdexcept>
#include <string>

namespace pdv {

// Base of every error thrown by the library. The exit code is what the CLI
// returns when the error escapes a subcommand.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what, int exit_code = 1)
        : std::runtime_error(what), exit_code_(exit_code) {}
    int exit_code() const noexcept { return exit_code_; }

private:
    int exit_code_;
};

// Malformed files, invalid parameters, off-grid maturities, out-of-band prices.
class InputError : public Error {
public:
    explicit InputError(const std::string& what) : Error(what, 2) {}
};

// Diverged paths, NaN losses, singular evaluations.
class NumericalError : public Error {
public:
    explicit NumericalError(const std::string& what) : Error(what, 3) {}
};

namespace exit_code {
inline constexpr int ok = 0;
inline constexpr int unexpected = 1;
inline constexpr int input = 2;
inline constexpr int numerical = 3;
inline constexpr int budget_exhausted = 4;
inline constexpr int replay_mismatch = 5;
}  // namespace exit_code

}  // namespace pdv
