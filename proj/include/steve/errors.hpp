#pragma once

#include <stdexcept>
#include <string>

namespace steve {

struct SteveError : std::runtime_error {
  explicit SteveError(const std::string& msg) : std::runtime_error(msg) {}
};

struct NormalizationError : SteveError { using SteveError::SteveError; };
struct DomainError : SteveError { using SteveError::SteveError; };
struct EmptyGroupError : SteveError { using SteveError::SteveError; };
struct ConfigError : SteveError { using SteveError::SteveError; };
struct FormatError : SteveError { using SteveError::SteveError; };
struct VersionError : SteveError { using SteveError::SteveError; };
struct InsufficientHistoryError : SteveError { using SteveError::SteveError; };
struct UnknownScenarioError : SteveError { using SteveError::SteveError; };
struct DegenerateDataError : SteveError { using SteveError::SteveError; };
struct ShapeError : SteveError { using SteveError::SteveError; };
struct LabelError : SteveError { using SteveError::SteveError; };
struct DivergenceError : SteveError { using SteveError::SteveError; };
struct NonFiniteError : SteveError { using SteveError::SteveError; };
struct EmptyScenarioError : SteveError { using SteveError::SteveError; };

}  // namespace steve
