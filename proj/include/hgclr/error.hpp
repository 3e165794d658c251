#pragma once

#include <stdexcept>
#include <string>

namespace hgclr {

class Error : public std::runtime_error {
  public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

class ShapeError : public Error {
  public:
    explicit ShapeError(const std::string& msg) : Error(msg) {}
};

class NumericError : public Error {
  public:
    explicit NumericError(const std::string& msg) : Error(msg) {}
};

class ParseError : public Error {
  public:
    explicit ParseError(const std::string& msg) : Error(msg) {}
};

class TaxonomyError : public Error {
  public:
    explicit TaxonomyError(const std::string& msg) : Error(msg) {}
};

class LabelSetError : public Error {
  public:
    explicit LabelSetError(const std::string& msg) : Error(msg) {}
};

class IoError : public Error {
  public:
    explicit IoError(const std::string& msg) : Error(msg) {}
};

class VersionError : public Error {
  public:
    explicit VersionError(const std::string& msg) : Error(msg) {}
};

class InvalidArgument : public Error {
  public:
    explicit InvalidArgument(const std::string& msg) : Error(msg) {}
};

}  // namespace hgclr
