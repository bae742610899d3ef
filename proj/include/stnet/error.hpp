#pragma once

#include <stdexcept>
#include <string>

namespace stnet {

// Error categories map one-to-one onto CLI exit codes (see README).
enum class ErrorCategory {
    config,
    shape,
    data,
    format,
    integrity,
    usage,
    label,
    numeric,
    oracle,
    divergence,
    import_weights,
    stratification,
    io,
};

inline const char* category_name(ErrorCategory c) {
    switch (c) {
        case ErrorCategory::config: return "config";
        case ErrorCategory::shape: return "shape";
        case ErrorCategory::data: return "data";
        case ErrorCategory::format: return "format";
        case ErrorCategory::integrity: return "integrity";
        case ErrorCategory::usage: return "usage";
        case ErrorCategory::label: return "label";
        case ErrorCategory::numeric: return "numeric";
        case ErrorCategory::oracle: return "oracle";
        case ErrorCategory::divergence: return "divergence";
        case ErrorCategory::import_weights: return "import";
        case ErrorCategory::stratification: return "stratification";
        case ErrorCategory::io: return "io";
    }
    return "unknown";
}

inline int category_exit_code(ErrorCategory c) {
    switch (c) {
        case ErrorCategory::config: return 2;
        case ErrorCategory::shape: return 3;
        case ErrorCategory::data: return 4;
        case ErrorCategory::format: return 5;
        case ErrorCategory::integrity: return 6;
        case ErrorCategory::usage: return 7;
        case ErrorCategory::label: return 8;
        case ErrorCategory::numeric: return 9;
        case ErrorCategory::oracle: return 10;
        case ErrorCategory::divergence: return 11;
        case ErrorCategory::import_weights: return 12;
        case ErrorCategory::stratification: return 13;
        case ErrorCategory::io: return 14;
    }
    return 1;
}

class Error : public std::runtime_error {
public:
    Error(ErrorCategory category, const std::string& what)
        : std::runtime_error(what), category_(category) {}

    ErrorCategory category() const { return category_; }
    int exit_code() const { return category_exit_code(category_); }

private:
    ErrorCategory category_;
};

struct ConfigError : Error {
    explicit ConfigError(const std::string& w) : Error(ErrorCategory::config, w) {}
};
struct ShapeError : Error {
    explicit ShapeError(const std::string& w) : Error(ErrorCategory::shape, w) {}
};
struct DataError : Error {
    explicit DataError(const std::string& w) : Error(ErrorCategory::data, w) {}
};
struct FormatError : Error {
    explicit FormatError(const std::string& w) : Error(ErrorCategory::format, w) {}
};
struct IntegrityError : Error {
    explicit IntegrityError(const std::string& w) : Error(ErrorCategory::integrity, w) {}
};
struct UsageError : Error {
    explicit UsageError(const std::string& w) : Error(ErrorCategory::usage, w) {}
};
struct LabelError : Error {
    explicit LabelError(const std::string& w) : Error(ErrorCategory::label, w) {}
};
struct NumericError : Error {
    explicit NumericError(const std::string& w) : Error(ErrorCategory::numeric, w) {}
};
struct OracleError : Error {
    explicit OracleError(const std::string& w) : Error(ErrorCategory::oracle, w) {}
};
struct DivergenceError : Error {
    explicit DivergenceError(const std::string& w) : Error(ErrorCategory::divergence, w) {}
};
struct ImportError : Error {
    explicit ImportError(const std::string& w) : Error(ErrorCategory::import_weights, w) {}
};
struct StratificationError : Error {
    explicit StratificationError(const std::string& w) : Error(ErrorCategory::stratification, w) {}
};
struct IoError : Error {
    explicit IoError(const std::string& w) : Error(ErrorCategory::io, w) {}
};

}  // namespace stnet
