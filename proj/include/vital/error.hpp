#pragma once

#include <stdexcept>
#include <string>

namespace vital {

// Error classes map onto CLI exit codes (config=2, data=3, numeric=4).
enum class ErrorClass { config, data, numeric, internal };

class Error : public std::runtime_error {
public:
    Error(ErrorClass cls, const std::string& what) : std::runtime_error(what), cls_(cls) {}
    ErrorClass error_class() const noexcept { return cls_; }

private:
    ErrorClass cls_;
};

struct ShapeError : Error {
    explicit ShapeError(const std::string& w) : Error(ErrorClass::numeric, "shape error: " + w) {}
};

struct NumericalError : Error {
    explicit NumericalError(const std::string& w) : Error(ErrorClass::numeric, "numerical error: " + w) {}
};

struct DegenerateVectorError : Error {
    explicit DegenerateVectorError(const std::string& w)
        : Error(ErrorClass::numeric, "degenerate vector: " + w) {}
};

struct EmptyLossError : Error {
    explicit EmptyLossError(const std::string& w) : Error(ErrorClass::numeric, "empty loss: " + w) {}
};

struct LengthError : Error {
    explicit LengthError(const std::string& w) : Error(ErrorClass::data, "length error: " + w) {}
};

struct ArgumentError : Error {
    explicit ArgumentError(const std::string& w) : Error(ErrorClass::config, "argument error: " + w) {}
};

struct DataError : Error {
    explicit DataError(const std::string& w) : Error(ErrorClass::data, w) {}
};

struct ConfigError : Error {
    explicit ConfigError(const std::string& w) : Error(ErrorClass::config, w) {}
};

// Scaffolding parameters found where only the deployed graph is allowed.
struct ContaminationError : Error {
    explicit ContaminationError(const std::string& w)
        : Error(ErrorClass::data, "scaffolding contamination: " + w) {}
};

struct DetachedError : Error {
    explicit DetachedError(const std::string& w)
        : Error(ErrorClass::data, "scaffolding detached: " + w) {}
};

inline int exit_code_for(ErrorClass cls) {
    switch (cls) {
        case ErrorClass::config: return 2;
        case ErrorClass::data: return 3;
        case ErrorClass::numeric: return 4;
        case ErrorClass::internal: return 1;
    }
    return 1;
}

}  // namespace vital
