#ifndef FLOWFILT_ERRORS_HPP
#define FLOWFILT_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace flowfilt {

// Base class for all errors thrown by this library.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Invalid argument value (negative weight, xlog of a negative number, ...).
class DomainError : public Error {
public:
    explicit DomainError(const std::string& msg) : Error(msg) {}
};

// Operands do not agree in state or measurement dimension.
class DimensionError : public Error {
public:
    explicit DimensionError(const std::string& msg) : Error(msg) {}
};

// All likelihood values vanish on the prior support; the Bayesian update
// cannot be carried out.
class UpdateImpossibleError : public Error {
public:
    explicit UpdateImpossibleError(const std::string& msg) : Error(msg) {}
};

// The Newton flow could not produce a usable step even after the damping
// retry ladder was exhausted.
class FlowStalledError : public Error {
public:
    explicit FlowStalledError(const std::string& msg) : Error(msg) {}
};

// Two distinct particles coincide where the log kernel is singular.
class SingularityError : public Error {
public:
    explicit SingularityError(const std::string& msg) : Error(msg) {}
};

// A caller violated an interface precondition (e.g. unequal weights where
// the recursive flow requires equal ones).
class ContractViolationError : public Error {
public:
    explicit ContractViolationError(const std::string& msg) : Error(msg) {}
};

// Scenario configuration failed to parse or validate. Carries the path of
// the offending field for diagnostics.
class ConfigError : public Error {
public:
    ConfigError(const std::string& field, const std::string& msg)
        : Error(field.empty() ? msg : field + ": " + msg), field_(field) {}
    const std::string& field() const { return field_; }

private:
    std::string field_;
};

} // namespace flowfilt

#endif
