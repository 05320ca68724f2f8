#pragma once

#include <stdexcept>
#include <string>

namespace kpc {

// Root of every error raised by the library. Callers that only need to know
// "something in kpc failed" catch this.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define KPC_DEFINE_ERROR(Name, Base)      \
  class Name : public Base {              \
   public:                                \
    using Base::Base;                     \
  }

// ingest
KPC_DEFINE_ERROR(FormatError, Error);
KPC_DEFINE_ERROR(EmptySourceError, Error);

// ontology / models
KPC_DEFINE_ERROR(SchemaError, Error);
KPC_DEFINE_ERROR(InheritanceCycleError, Error);
KPC_DEFINE_ERROR(DanglingNameError, Error);
KPC_DEFINE_ERROR(InstanceParseError, Error);
KPC_DEFINE_ERROR(CyclicModelError, Error);

// prompting
KPC_DEFINE_ERROR(TemplateError, Error);
KPC_DEFINE_ERROR(EmptyExamplesError, Error);
KPC_DEFINE_ERROR(Step1ParseError, Error);

// llm
KPC_DEFINE_ERROR(NoAnswerError, Error);
KPC_DEFINE_ERROR(ProviderError, Error);
KPC_DEFINE_ERROR(AuthError, ProviderError);
KPC_DEFINE_ERROR(RateLimitExhaustedError, ProviderError);
KPC_DEFINE_ERROR(TimeoutError, ProviderError);

// harness
KPC_DEFINE_ERROR(ConfigError, Error);
KPC_DEFINE_ERROR(ShotTooLargeError, ConfigError);

#undef KPC_DEFINE_ERROR

}  // namespace kpc
