#pragma once

#include <stdexcept>
#include <string>

namespace firmcast {

/// Base class for all library errors.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Input file lacks mandatory columns or has a malformed header.
struct SchemaError : Error {
    using Error::Error;
};

/// Structural duplicate, e.g. two rows for one (company, fiscal year).
struct IntegrityError : Error {
    using Error::Error;
};

/// Invalid option combination or out-of-range configuration value.
struct ConfigError : Error {
    using Error::Error;
};

/// Not enough (or degenerate) data to carry out an operation.
struct DataError : Error {
    using Error::Error;
};

/// An auxiliary series (e.g. inflation rates) does not cover a required year.
struct CoverageError : Error {
    using Error::Error;
};

/// A value left the mathematical domain of an operation (e.g. assets <= 0).
struct DomainError : Error {
    using Error::Error;
};

/// The growth-equation denominator came within the guard band of zero.
struct SingularityError : Error {
    SingularityError(const std::string& msg, double assets_, double denominator_)
        : Error(msg), assets(assets_), denominator(denominator_) {}
    double assets = 0.0;
    double denominator = 0.0;
};

/// A non-finite value appeared where the computation requires finite ones.
struct NumericError : Error {
    using Error::Error;
};

/// Training failed (divergence, impossible early-stop state, ...).
struct TrainError : Error {
    using Error::Error;
};

} // namespace firmcast
