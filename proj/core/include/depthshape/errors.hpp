#pragma once

#include <stdexcept>
#include <string>

namespace depthshape {

/// Error categories map 1:1 onto the CLI exit codes (config 2, data 3,
/// numerical 4). Library code throws these; the tools layer translates.
class Error : public std::runtime_error {
  public:
    enum class Category { Config = 2, Data = 3, Numerical = 4 };

    Error(Category cat, const std::string &msg) : std::runtime_error(msg), category_(cat) {}
    Category category() const { return category_; }
    int exit_code() const { return static_cast<int>(category_); }

  private:
    Category category_;
};

/// Invalid parameters, unsatisfiable configuration, unsupported combinations.
class ConfigError : public Error {
  public:
    explicit ConfigError(const std::string &msg) : Error(Category::Config, msg) {}
};

/// Malformed files, shape mismatches, empty overlaps.
class DataError : public Error {
  public:
    explicit DataError(const std::string &msg) : Error(Category::Data, msg) {}
};

/// Degenerate fits, singular systems, insufficient scene structure.
class NumericalError : public Error {
  public:
    explicit NumericalError(const std::string &msg) : Error(Category::Numerical, msg) {}
};

} // namespace depthshape
