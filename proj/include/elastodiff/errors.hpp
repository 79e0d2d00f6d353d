#pragma once

#include <stdexcept>
#include <string>

namespace elastodiff {

struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

#define ELASTODIFF_DEFINE_ERROR(Name)                            \
  struct Name : Error {                                          \
    explicit Name(const std::string& msg) : Error(#Name ": " + msg) {} \
  }

ELASTODIFF_DEFINE_ERROR(InvertedRestElement);
ELASTODIFF_DEFINE_ERROR(NonManifold);
ELASTODIFF_DEFINE_ERROR(DegenerateElement);
ELASTODIFF_DEFINE_ERROR(NonPositiveDeterminant);
ELASTODIFF_DEFINE_ERROR(NonPositiveDistance);
ELASTODIFF_DEFINE_ERROR(DegenerateEdge);
ELASTODIFF_DEFINE_ERROR(NewtonDivergence);
ELASTODIFF_DEFINE_ERROR(SingularSystem);
ELASTODIFF_DEFINE_ERROR(LineSearchFailure);
ELASTODIFF_DEFINE_ERROR(ForwardSolveFailure);
ELASTODIFF_DEFINE_ERROR(SchemaError);
ELASTODIFF_DEFINE_ERROR(DanglingReference);
ELASTODIFF_DEFINE_ERROR(UnknownKind);

#undef ELASTODIFF_DEFINE_ERROR

}  // namespace elastodiff
