#include "cubetrack/errors.hpp"

namespace cubetrack {

#define CUBETRACK_DEFINE_ERROR(Name) \
  Name::Name(const std::string& what_arg) : Error(#Name ": " + what_arg) {}

CUBETRACK_DEFINE_ERROR(PointBehindCamera)
CUBETRACK_DEFINE_ERROR(DegenerateConfiguration)
CUBETRACK_DEFINE_ERROR(NonInvertibleHomography)
CUBETRACK_DEFINE_ERROR(DictionaryExhausted)
CUBETRACK_DEFINE_ERROR(UnknownMarker)
CUBETRACK_DEFINE_ERROR(CubeNotVisible)
CUBETRACK_DEFINE_ERROR(NearBorder)
CUBETRACK_DEFINE_ERROR(DegenerateGeometry)
CUBETRACK_DEFINE_ERROR(DivergedSolution)
CUBETRACK_DEFINE_ERROR(InitialPoseFailed)
CUBETRACK_DEFINE_ERROR(FaceNotVisible)
CUBETRACK_DEFINE_ERROR(SizeMismatch)
CUBETRACK_DEFINE_ERROR(LengthMismatch)
CUBETRACK_DEFINE_ERROR(TimestampGap)
CUBETRACK_DEFINE_ERROR(DegenerateCalibration)
CUBETRACK_DEFINE_ERROR(UndefinedMetric)
CUBETRACK_DEFINE_ERROR(StepOutOfRange)
CUBETRACK_DEFINE_ERROR(EmptyBatch)
CUBETRACK_DEFINE_ERROR(NonFiniteLoss)

#undef CUBETRACK_DEFINE_ERROR

SchemaViolation::SchemaViolation(const std::string& source, int line,
                                 const std::string& message)
    : Error("SchemaViolation: " + source + (line > 0 ? ":" + std::to_string(line) : "") +
            ": " + message),
      line_(line) {}

}  // namespace cubetrack
