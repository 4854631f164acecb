#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace cmr {

enum class ErrorKind {
  InvalidArgument,
  ShapeMismatch,
  NonFinite,
  NotInvertible,
  NotPsd,
  RankDeficient,
  RankRequest,
  OutOfDomain,
  Degenerate,
  EmptyDataset,
  Diverged,
  BadMagic,
  TruncatedFile,
  DimensionMismatch,
  NotDivisible,
  InsufficientSamples,
  Config,
  Io,
};

std::string_view error_kind_name(ErrorKind kind) noexcept;

// Every library failure is reported as an Error carrying its kind; the C API
// maps the kind onto a status code.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) {
  throw Error(kind, what);
}

inline void require(bool condition, ErrorKind kind, const char* what) {
  if (!condition) fail(kind, what);
}

}  // namespace cmr
