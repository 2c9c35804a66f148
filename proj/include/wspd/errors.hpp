#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace wspd {

// Base of every error raised by the library. `kind()` is a stable short name
// used in run reports and HTTP error bodies.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& what)
      : std::runtime_error(what), kind_(std::move(kind)) {}

  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

#define WSPD_DEFINE_ERROR(Name)                                   \
  class Name : public Error {                                     \
   public:                                                        \
    explicit Name(const std::string& what) : Error(#Name, what) {} \
  };

WSPD_DEFINE_ERROR(ClampCollapsed)
WSPD_DEFINE_ERROR(OutOfBounds)
WSPD_DEFINE_ERROR(DuplicateId)
WSPD_DEFINE_ERROR(MissingGeoTag)
WSPD_DEFINE_ERROR(UnknownImage)
WSPD_DEFINE_ERROR(EmptyPatch)
WSPD_DEFINE_ERROR(EmptyClass)
WSPD_DEFINE_ERROR(DimMismatch)
WSPD_DEFINE_ERROR(MissingFeature)
WSPD_DEFINE_ERROR(SampleTooLarge)
WSPD_DEFINE_ERROR(UnknownBox)
WSPD_DEFINE_ERROR(UnknownSession)
WSPD_DEFINE_ERROR(EmptySession)
WSPD_DEFINE_ERROR(NoValidPlacement)
WSPD_DEFINE_ERROR(NoGroundTruth)
WSPD_DEFINE_ERROR(EmptyCurve)
WSPD_DEFINE_ERROR(IoError)
WSPD_DEFINE_ERROR(ConfigError)

#undef WSPD_DEFINE_ERROR

// Malformed input row. `line()` is 1-based; 0 when the error is not tied to
// a particular line.
class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& reason)
      : Error("ParseError", "line " + std::to_string(line) + ": " + reason),
        line_(line),
        reason_(reason) {}

  std::size_t line() const noexcept { return line_; }
  const std::string& reason() const noexcept { return reason_; }

 private:
  std::size_t line_;
  std::string reason_;
};

}  // namespace wspd
