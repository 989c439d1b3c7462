// Exception types shared across the library.

#pragma once

#include <stdexcept>
#include <string>

namespace georing {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

#define GEORING_DEFINE_ERROR(Name)                                     \
    struct Name final : Error {                                        \
        Name() : Error(#Name) {}                                       \
        explicit Name(const std::string& msg) : Error(#Name ": " + msg) {} \
    }

GEORING_DEFINE_ERROR(OutOfRegion);
GEORING_DEFINE_ERROR(KeyWidthMismatch);
GEORING_DEFINE_ERROR(InsufficientAnchors);
GEORING_DEFINE_ERROR(DegenerateGeometry);
GEORING_DEFINE_ERROR(InvalidObservation);
GEORING_DEFINE_ERROR(DegenerateK);
GEORING_DEFINE_ERROR(NoActionNeeded);
GEORING_DEFINE_ERROR(DuplicateKey);
GEORING_DEFINE_ERROR(UnknownNode);
GEORING_DEFINE_ERROR(DimensionError);
GEORING_DEFINE_ERROR(UnrecoverableFrame);
GEORING_DEFINE_ERROR(IncomparableReports);
GEORING_DEFINE_ERROR(ConfigError);

#undef GEORING_DEFINE_ERROR

}  // namespace georing
