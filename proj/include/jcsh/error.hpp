#ifndef JCSH_ERROR_HPP
#define JCSH_ERROR_HPP

#include <stdexcept>
#include <string>

namespace jcsh {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
public:
    using Error::Error;
};

/// Raised when the stationary equation has more than one trace-one solution.
class DegenerateSteadyState : public Error {
public:
    using Error::Error;
};

class ConvergenceError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

} // namespace jcsh

#endif
