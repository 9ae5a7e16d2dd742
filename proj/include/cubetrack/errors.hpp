#pragma once

#include <stdexcept>
#include <string>

namespace cubetrack {

// Base of every error raised by the library. Each failure mode has its own
// type so callers (and the CLI exit-code mapping) can dispatch on it.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define CUBETRACK_DECLARE_ERROR(Name)              \
  class Name : public Error {                      \
   public:                                         \
    explicit Name(const std::string& what_arg);    \
  }

// geometry
CUBETRACK_DECLARE_ERROR(PointBehindCamera);
CUBETRACK_DECLARE_ERROR(DegenerateConfiguration);
CUBETRACK_DECLARE_ERROR(NonInvertibleHomography);
// cube_model
CUBETRACK_DECLARE_ERROR(DictionaryExhausted);
CUBETRACK_DECLARE_ERROR(UnknownMarker);
// synth
CUBETRACK_DECLARE_ERROR(CubeNotVisible);
// detect
CUBETRACK_DECLARE_ERROR(NearBorder);
// pnp
CUBETRACK_DECLARE_ERROR(DegenerateGeometry);
CUBETRACK_DECLARE_ERROR(DivergedSolution);
// robust_track
CUBETRACK_DECLARE_ERROR(InitialPoseFailed);
CUBETRACK_DECLARE_ERROR(FaceNotVisible);
CUBETRACK_DECLARE_ERROR(SizeMismatch);
// trajectory
CUBETRACK_DECLARE_ERROR(LengthMismatch);
CUBETRACK_DECLARE_ERROR(TimestampGap);
CUBETRACK_DECLARE_ERROR(DegenerateCalibration);
CUBETRACK_DECLARE_ERROR(UndefinedMetric);
// ddpm
CUBETRACK_DECLARE_ERROR(StepOutOfRange);
CUBETRACK_DECLARE_ERROR(EmptyBatch);
CUBETRACK_DECLARE_ERROR(NonFiniteLoss);

#undef CUBETRACK_DECLARE_ERROR

// File-format violation; carries the 1-based line number (0 when the error is
// not tied to a line, e.g. a missing file).
class SchemaViolation : public Error {
 public:
  SchemaViolation(const std::string& source, int line, const std::string& message);
  int line() const noexcept { return line_; }

 private:
  int line_;
};

}  // namespace cubetrack
