#pragma once

#include <stdexcept>
#include <string>

namespace relperturb {

/// Base class for all library errors.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct InvalidSpectrum : Error { using Error::Error; };
struct InvalidBasis : Error { using Error::Error; };
struct InvalidIndex : Error { using Error::Error; };
struct NotSimple : Error { using Error::Error; };
struct NoGap : Error { using Error::Error; };
struct DimError : Error { using Error::Error; };
struct PreconditionFailed : Error { using Error::Error; };
struct DegenerateSign : Error { using Error::Error; };
struct MomentError : Error { using Error::Error; };
struct DecayError : Error { using Error::Error; };
struct EmbeddingError : Error { using Error::Error; };
struct ModelError : Error { using Error::Error; };
struct TooSmallBlock : Error { using Error::Error; };
struct NotLongMemory : Error { using Error::Error; };
struct ConfigError : Error { using Error::Error; };

}  // namespace relperturb
