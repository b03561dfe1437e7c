#ifndef LLMO_ERRORS_HPP
#define LLMO_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace llmo {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Memory buffers or populations with impossible shapes (too few rows, empty
// blocks, mismatched reward vectors).
class StructuralError : public Error {
public:
    using Error::Error;
};

// Bad inputs caught before any work: invalid configs, non-stochastic
// matrices, malformed bounds.
class ValidationError : public Error {
public:
    using Error::Error;
};

// An enumeration request larger than the configured ceiling.
class CapacityError : public Error {
public:
    using Error::Error;
};

// A computation whose answer is undefined for this input (empty support,
// zero initial gap).
class DegenerateError : public Error {
public:
    using Error::Error;
};

// Reward model evaluated outside its domain, or produced a non-finite value.
class ModelError : public Error {
public:
    using Error::Error;
};

// Regression over too few or unusable points.
class FitError : public Error {
public:
    using Error::Error;
};

// Text that could not be read as a population. The three subtypes are
// distinguishable so retry policies can log the cause.
class ParseError : public Error {
public:
    using Error::Error;
};

// Wrong row or column count.
class ShapeError : public ParseError {
public:
    using ParseError::ParseError;
};

// A cell that is not a number of the expected kind.
class FormatError : public ParseError {
public:
    using ParseError::ParseError;
};

// A value outside its declared range. Used both by the parser and by
// action construction; out-of-range values are rejected at the boundary,
// never clamped.
class BoundsError : public Error {
public:
    using Error::Error;
};

// An agent call that did not produce a usable population.
class AgentFailure : public Error {
public:
    enum class Kind { Transport, Api, Parse };

    AgentFailure(Kind k, const std::string& msg, int attempts_made = 1)
        : Error(msg), kind(k), attempts(attempts_made) {}

    Kind kind;
    int attempts;
};

}  // namespace llmo

#endif
