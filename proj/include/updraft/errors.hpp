#pragma once

#include <stdexcept>
#include <string>

namespace updraft {

// Error taxonomy used across the toolkit. The CLI maps these onto exit
// codes: usage errors 2 (handled by the parser), validation 3, runtime 4.

/// Input violates a documented precondition or invariant.
class ValidationError : public std::runtime_error {
public:
    explicit ValidationError(const std::string& what) : std::runtime_error(what) {}
};

/// A file is structurally not in the expected format.
class FormatError : public ValidationError {
public:
    explicit FormatError(const std::string& what) : ValidationError(what) {}
};

/// Distribution parameters or probabilities outside their domain.
class DomainError : public ValidationError {
public:
    explicit DomainError(const std::string& what) : ValidationError(what) {}
};

/// A metric was requested on a selection where it has no defined value.
/// Raised instead of returning NaN so pipelines fail loudly.
class UndefinedMetricError : public ValidationError {
public:
    explicit UndefinedMetricError(const std::string& what) : ValidationError(what) {}
};

/// Filesystem-level failure (unreadable, unwritable, truncated payload).
class IoError : public std::runtime_error {
public:
    explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

} // namespace updraft
