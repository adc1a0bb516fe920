#pragma once

#include <stdexcept>
#include <string>

namespace mixfreq {

// Base class for all library errors.
class Error : public std::runtime_error {
  public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// Dimension or emptiness violations on matrices and token blocks.
class ShapeError : public Error {
  public:
    explicit ShapeError(const std::string& what) : Error(what) {}
};

// Non-finite values where finite arithmetic is required.
class NumericError : public Error {
  public:
    explicit NumericError(const std::string& what) : Error(what) {}
};

// Invalid argument values (empty strings, bad ranges, empty collections).
class ArgumentError : public Error {
  public:
    explicit ArgumentError(const std::string& what) : Error(what) {}
};

// A segment that contains no frames of its timeline.
class DegenerateSegmentError : public Error {
  public:
    explicit DegenerateSegmentError(const std::string& what) : Error(what) {}
};

// A timeline with zero duration.
class DegenerateTimelineError : public Error {
  public:
    explicit DegenerateTimelineError(const std::string& what) : Error(what) {}
};

// A model reply that contains no parsable temporal segment.
class GroundingParseError : public Error {
  public:
    explicit GroundingParseError(const std::string& what) : Error(what) {}
};

// Invalid feature vectors (zero norm, length mismatch).
class FeatureError : public Error {
  public:
    explicit FeatureError(const std::string& what) : Error(what) {}
};

// Transport or protocol failure talking to a language/judge backend.
class BackendError : public Error {
  public:
    explicit BackendError(const std::string& what) : Error(what) {}
};

// File reading/writing and format parsing failures.
class IoError : public Error {
  public:
    explicit IoError(const std::string& what) : Error(what) {}
};

} // namespace mixfreq
