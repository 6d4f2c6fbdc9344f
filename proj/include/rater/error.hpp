#pragma once

#include <stdexcept>
#include <string>

namespace rater {

enum class ErrorKind {
  parse,
  domain,
  empty_data,
  unsupported,
  shape,
  numerical,
  state,
  init,
  io,
  archive,
  argument,
};

// All library failures derive from Error so the C boundary can map them to
// a status code without string matching.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : Error(ErrorKind::parse, "line " + std::to_string(line) + ": " + what),
        line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

#define RATER_DEFINE_ERROR(Name, Kind)                                 \
  class Name : public Error {                                          \
   public:                                                             \
    explicit Name(const std::string& what) : Error(ErrorKind::Kind, what) {} \
  };

RATER_DEFINE_ERROR(DomainError, domain)
RATER_DEFINE_ERROR(EmptyDataError, empty_data)
RATER_DEFINE_ERROR(UnsupportedError, unsupported)
RATER_DEFINE_ERROR(ShapeError, shape)
RATER_DEFINE_ERROR(StateError, state)
RATER_DEFINE_ERROR(InitError, init)
RATER_DEFINE_ERROR(IoError, io)
RATER_DEFINE_ERROR(ArchiveError, archive)
RATER_DEFINE_ERROR(ArgumentError, argument)

#undef RATER_DEFINE_ERROR

class NumericalError : public Error {
 public:
  explicit NumericalError(const std::string& what, long coordinate = -1)
      : Error(ErrorKind::numerical,
              coordinate < 0 ? what
                             : what + " (coordinate " +
                                   std::to_string(coordinate) + ")"),
        coordinate_(coordinate) {}
  long coordinate() const noexcept { return coordinate_; }

 private:
  long coordinate_;
};

}  // namespace rater
