#pragma once

#include <stdexcept>
#include <string>

namespace aoii {

/// Base class for all library errors.
struct Error : std::runtime_error {
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// -- generator validation --------------------------------------------------

struct NegativeOffDiagonal : Error {
    using Error::Error;
};
struct NonzeroRowSum : Error {
    using Error::Error;
};
struct AbsorbingState : Error {
    using Error::Error;
};
struct Reducible : Error {
    using Error::Error;
};
struct IndexOutOfRange : Error {
    using Error::Error;
};

// -- phase-type / linear algebra -------------------------------------------

struct NonFinite : Error {
    using Error::Error;
};
struct SingularMatrix : Error {
    using Error::Error;
};
struct ConditioningOnNull : Error {
    using Error::Error;
};
struct ZeroDiagonal : Error {
    using Error::Error;
};

// -- cycle model / synchronization chain -----------------------------------

struct ThresholdAbsorbsAll : Error {
    using Error::Error;
};
struct SingularChain : Error {
    using Error::Error;
};

// -- solver -----------------------------------------------------------------

struct SingularSystem : Error {
    using Error::Error;
};
struct BisectionFailed : Error {
    using Error::Error;
};
struct InfeasibleBudget : Error {
    using Error::Error;
};

// -- simulator / calibration -------------------------------------------------

struct NonMonotoneScript : Error {
    using Error::Error;
};
struct CalibrationFailed : Error {
    using Error::Error;
};

// -- experiment front-end -----------------------------------------------------

struct ConfigError : Error {
    using Error::Error;
};
struct NotBinary : Error {
    using Error::Error;
};

} // namespace aoii
