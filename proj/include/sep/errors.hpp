#ifndef SEP_ERRORS_HPP
#define SEP_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace sep {

// Precondition / invariant violation: caller passed something the contract forbids.
class ContractError : public std::runtime_error {
public:
    explicit ContractError(const std::string& msg) : std::runtime_error(msg) {}
};

// Solver produced non-finite values or runaway residual growth.
class DivergenceError : public std::runtime_error {
public:
    DivergenceError(const std::string& msg, int iteration)
        : std::runtime_error(msg), iter(iteration) {}
    int iter;
};

// Algebraic degeneracy (division guard tripped, denoiser saturated, empty rank, ...).
class DegeneracyError : public std::runtime_error {
public:
    explicit DegeneracyError(const std::string& msg) : std::runtime_error(msg) {}
};

} // namespace sep

#endif
