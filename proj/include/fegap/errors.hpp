#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace fegap {

// Input data that violates the schema or a record invariant.
class DataError : public std::runtime_error {
public:
    DataError(std::size_t row, std::string field, const std::string& reason)
        : std::runtime_error("row " + std::to_string(row) + ", field '" + field + "': " + reason),
          row_(row),
          field_(std::move(field)),
          reason_(reason) {}

    std::size_t row() const noexcept { return row_; }
    const std::string& field() const noexcept { return field_; }
    const std::string& reason() const noexcept { return reason_; }

private:
    std::size_t row_;
    std::string field_;
    std::string reason_;
};

// Model specification that cannot be applied to the data.
class SpecError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Numerical failure: rank deficiency, non-PD covariance, degenerate series.
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace fegap
