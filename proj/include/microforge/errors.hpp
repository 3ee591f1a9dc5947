#pragma once

#include <stdexcept>
#include <string>

namespace microforge {

// Every failure the library reports derives from Error, so callers that only
// care about "something went wrong" can catch one type.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define MICROFORGE_ERROR(Name)                                  \
  class Name : public Error {                                   \
   public:                                                      \
    explicit Name(const std::string& what) : Error(#Name ": " + what) {} \
  };

// gel-core
MICROFORGE_ERROR(DomainError)
MICROFORGE_ERROR(NoRootError)
MICROFORGE_ERROR(RangeError)
// magneto-dynamics / world
MICROFORGE_ERROR(StepTooLarge)
MICROFORGE_ERROR(InvalidCommand)
MICROFORGE_ERROR(KindMismatch)
MICROFORGE_ERROR(NotMated)
MICROFORGE_ERROR(NoContact)
// mating protocol
MICROFORGE_ERROR(IllegalTransition)
MICROFORGE_ERROR(MissingConstraintWalls)
// scenario / cli
MICROFORGE_ERROR(SchemaError)
MICROFORGE_ERROR(AssertionFailed)
MICROFORGE_ERROR(GridError)
MICROFORGE_ERROR(UnreachableWaypoint)
// teleop
MICROFORGE_ERROR(PortInUse)
MICROFORGE_ERROR(MalformedMessage)

#undef MICROFORGE_ERROR

}  // namespace microforge
