#pragma once

#include <stdexcept>
#include <string>

namespace oscar {

// Root of every error the library throws. Catch this at tool boundaries.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define OSCAR_DEFINE_ERROR(Name)            \
  class Name : public Error {               \
   public:                                  \
    explicit Name(const std::string& what)  \
        : Error(#Name ": " + what) {}       \
  }

// recipe_model
OSCAR_DEFINE_ERROR(UnparseableRecipe);
OSCAR_DEFINE_ERROR(MalformedLLMOutput);
OSCAR_DEFINE_ERROR(InvalidRecipe);

// remote services (LLM, embedding)
OSCAR_DEFINE_ERROR(BackendError);

// frame_sampler
OSCAR_DEFINE_ERROR(InvalidInterval);
OSCAR_DEFINE_ERROR(DecodeError);

// embedding / alignment
OSCAR_DEFINE_ERROR(DimensionMismatch);
OSCAR_DEFINE_ERROR(ShapeMismatch);
OSCAR_DEFINE_ERROR(InvalidWeight);

// causal_tracker
OSCAR_DEFINE_ERROR(ShapeError);
OSCAR_DEFINE_ERROR(TooLarge);

// evaluation
OSCAR_DEFINE_ERROR(SchemaError);
OSCAR_DEFINE_ERROR(MissingPrediction);
OSCAR_DEFINE_ERROR(PairingError);

// session_service
OSCAR_DEFINE_ERROR(UnknownSession);
OSCAR_DEFINE_ERROR(NonMonotoneTimestamp);

#undef OSCAR_DEFINE_ERROR

}  // namespace oscar
