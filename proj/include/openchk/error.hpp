#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace openchk {

// Base of every error raised by the toolkit.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define OPENCHK_DEFINE_ERROR(Name, Base)   \
  class Name : public Base {               \
   public:                                 \
    using Base::Base;                      \
  };

// ---- frontend -------------------------------------------------------------

// Errors carrying a 1-based source line (0 when unknown).
class LocatedError : public Error {
 public:
  LocatedError(const std::string& msg, std::size_t line = 0)
      : Error(line ? "line " + std::to_string(line) + ": " + msg : msg), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

OPENCHK_DEFINE_ERROR(ScanError, LocatedError)
OPENCHK_DEFINE_ERROR(ParseError, LocatedError)
OPENCHK_DEFINE_ERROR(DuplicateClause, ParseError)
OPENCHK_DEFINE_ERROR(SectionSyntaxError, ParseError)
OPENCHK_DEFINE_ERROR(ExpansionError, Error)

class MissingMandatoryClause : public ParseError {
 public:
  explicit MissingMandatoryClause(std::string clause)
      : ParseError("store directive requires clause '" + clause + "'"),
        clause_(std::move(clause)) {}
  const std::string& clause() const noexcept { return clause_; }

 private:
  std::string clause_;
};

// ---- translator -----------------------------------------------------------

OPENCHK_DEFINE_ERROR(TranslateError, LocatedError)
OPENCHK_DEFINE_ERROR(UnknownSymbol, Error)
OPENCHK_DEFINE_ERROR(EmptySection, Error)
OPENCHK_DEFINE_ERROR(ClauseTypeError, Error)
OPENCHK_DEFINE_ERROR(ExprError, Error)
OPENCHK_DEFINE_ERROR(DuplicateRegion, Error)

class OutOfBounds : public Error {
 public:
  OutOfBounds(const std::string& msg, std::size_t dimension)
      : Error(msg + " (dimension " + std::to_string(dimension) + ")"), dimension_(dimension) {}
  std::size_t dimension() const noexcept { return dimension_; }

 private:
  std::size_t dimension_;
};

// ---- storage / runtime ----------------------------------------------------

OPENCHK_DEFINE_ERROR(StorageError, Error)
OPENCHK_DEFINE_ERROR(ConfigError, Error)
OPENCHK_DEFINE_ERROR(StoreError, Error)
OPENCHK_DEFINE_ERROR(StoreAborted, StoreError)
OPENCHK_DEFINE_ERROR(LevelError, Error)
OPENCHK_DEFINE_ERROR(ManifestMismatch, Error)
OPENCHK_DEFINE_ERROR(RecoveryFailed, Error)
OPENCHK_DEFINE_ERROR(LifecycleError, Error)
OPENCHK_DEFINE_ERROR(CommError, Error)
OPENCHK_DEFINE_ERROR(FormatError, Error)

// ---- level backends -------------------------------------------------------

OPENCHK_DEFINE_ERROR(SchemeError, Error)
OPENCHK_DEFINE_ERROR(Unrecoverable, Error)

// ---- diff engine ----------------------------------------------------------

OPENCHK_DEFINE_ERROR(ParamError, Error)
OPENCHK_DEFINE_ERROR(ChainError, Error)

// ---- flush agent ----------------------------------------------------------

OPENCHK_DEFINE_ERROR(AgentError, Error)

class FlushError : public Error {
 public:
  FlushError(const std::string& msg, std::uint64_t epoch)
      : Error("flush of epoch " + std::to_string(epoch) + " failed: " + msg), epoch_(epoch) {}
  std::uint64_t epoch() const noexcept { return epoch_; }

 private:
  std::uint64_t epoch_;
};

// ---- harness --------------------------------------------------------------

OPENCHK_DEFINE_ERROR(HarnessError, Error)
OPENCHK_DEFINE_ERROR(ReportError, Error)

#undef OPENCHK_DEFINE_ERROR

}  // namespace openchk
