#pragma once

#include <stdexcept>
#include <string>

namespace crossover {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ShapeError : public Error { using Error::Error; };
class IndexError : public Error { using Error::Error; };
class BoundedHorizonError : public Error { using Error::Error; };
class EnumerationTooLarge : public Error { using Error::Error; };
class DegenerateSample : public Error { using Error::Error; };
class MissingSequence : public Error { using Error::Error; };
class DegenerateCovariance : public Error { using Error::Error; };
class ConditioningError : public Error { using Error::Error; };
class ParameterError : public Error { using Error::Error; };

class NotIdentifiable : public Error {
public:
    NotIdentifiable(int rank, int dimension)
        : Error("rank condition fails: rank " + std::to_string(rank) + " < dimension " +
                std::to_string(dimension)),
          rank_(rank), dimension_(dimension) {}
    int rank() const { return rank_; }
    int dimension() const { return dimension_; }

private:
    int rank_;
    int dimension_;
};

// row is 1-based and counts the header line; 0 when the failure is not tied to a row.
class ParseError : public Error {
public:
    ParseError(const std::string& what, int row = 0)
        : Error(row > 0 ? "row " + std::to_string(row) + ": " + what : what), row_(row) {}
    int row() const { return row_; }

private:
    int row_;
};

}  // namespace crossover
