#pragma once

#include <stdexcept>

namespace xda {

// Base for every error thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// A detection failed field validation (non-finite value, bad range,
// wrong score-vector length, zero-area box).
class MalformedDetection : public Error {
public:
    using Error::Error;
};

// Tensor or grid dimensions do not line up.
class ShapeMismatch : public Error {
public:
    using Error::Error;
};

// Weight vectors with different layout ids or lengths cannot be mixed.
class LayoutMismatch : public Error {
public:
    using Error::Error;
};

// A file could not be parsed (syntax, magic bytes, unknown keys).
class ParseError : public Error {
public:
    using Error::Error;
};

// A value violates a documented invariant.
class RangeError : public Error {
public:
    using Error::Error;
};

// Selections do not correspond to the stream they are evaluated against.
class StreamMismatch : public Error {
public:
    using Error::Error;
};

// A simulator class profile is unusable (bad rates, distribution
// parameters, or box sizes).
class InvalidProfile : public Error {
public:
    using Error::Error;
};

}  // namespace xda
