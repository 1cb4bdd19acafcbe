#pragma once

#include <stdexcept>
#include <string>

namespace strata {

/// Base class for every error raised by the library. `module()` names the
/// component whose contract was violated so the CLI can report it.
class Error : public std::runtime_error {
 public:
  Error(std::string module, const std::string& what)
      : std::runtime_error(module + ": " + what), module_(std::move(module)) {}

  const std::string& module() const noexcept { return module_; }

 private:
  std::string module_;
};

#define STRATA_DEFINE_ERROR(Name)                                        \
  class Name : public Error {                                           \
   public:                                                              \
    Name(std::string module, const std::string& what)                   \
        : Error(std::move(module), what) {}                             \
  };

STRATA_DEFINE_ERROR(SchemaError)
STRATA_DEFINE_ERROR(ParseError)
STRATA_DEFINE_ERROR(EmptyDatasetError)
STRATA_DEFINE_ERROR(SpecError)
STRATA_DEFINE_ERROR(StratificationError)
STRATA_DEFINE_ERROR(DivergenceError)
STRATA_DEFINE_ERROR(RangeError)
STRATA_DEFINE_ERROR(SingularityError)
STRATA_DEFINE_ERROR(NumericalError)
STRATA_DEFINE_ERROR(LabelError)
STRATA_DEFINE_ERROR(ParameterError)
STRATA_DEFINE_ERROR(ConfigError)
STRATA_DEFINE_ERROR(UndefinedUtilityError)
STRATA_DEFINE_ERROR(FormatError)
STRATA_DEFINE_ERROR(PreconditionError)

#undef STRATA_DEFINE_ERROR

}  // namespace strata
