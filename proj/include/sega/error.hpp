#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace sega {

/// Two operands disagree on shape or length.
class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// An argument lies outside the mathematical domain of an operation.
class DomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

/// A configuration value failed validation. `field()` holds the dotted path
/// of the offending value, e.g. `guidance.concepts[0].edit_scale`.
class ConfigError : public std::invalid_argument {
public:
    /// `schema`: wrong type, missing or unknown field. `range`: well-formed
    /// value outside its accepted range, or an unknown concept tag.
    enum class Kind { schema, range };

    ConfigError(std::string field, const std::string& message, Kind kind = Kind::schema)
        : std::invalid_argument(field.empty() ? message : field + ": " + message),
          field_(std::move(field)),
          message_(message),
          kind_(kind) {}

    const std::string& field() const noexcept { return field_; }
    const std::string& message() const noexcept { return message_; }
    Kind kind() const noexcept { return kind_; }

private:
    std::string field_;
    std::string message_;
    Kind kind_;
};

/// An engine result contained NaN or Inf.
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace sega
