#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace shsnet {

// Base of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class MalformedLine : public Error {
 public:
  explicit MalformedLine(std::size_t line_no, const std::string& detail = {})
      : Error("malformed line " + std::to_string(line_no) + (detail.empty() ? "" : ": " + detail)),
        line_no_(line_no) {}
  std::size_t line_no() const noexcept { return line_no_; }

 private:
  std::size_t line_no_;
};

class EmptyCloud : public Error {
 public:
  EmptyCloud() : Error("point cloud has no points") {}
};

class IoError : public Error {
 public:
  using Error::Error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

class DegeneratePatch : public Error {
 public:
  DegeneratePatch() : Error("degenerate patch: all neighbors coincide with the query point") {}
};

class RankDeficient : public Error {
 public:
  using Error::Error;
};

class DisconnectedGraph : public Error {
 public:
  explicit DisconnectedGraph(std::size_t components)
      : Error("neighbor graph is disconnected (" + std::to_string(components) +
              " components); increase the graph neighborhood size"),
        components_(components) {}
  std::size_t components() const noexcept { return components_; }

 private:
  std::size_t components_;
};

class ShapeMismatch : public Error {
 public:
  using Error::Error;
};

class NotScalar : public Error {
 public:
  using Error::Error;
};

class DegenerateNormal : public Error {
 public:
  DegenerateNormal() : Error("predicted normal has vanishing length") {}
};

class NonFiniteGradient : public Error {
 public:
  explicit NonFiniteGradient(const std::string& name)
      : Error("non-finite gradient in parameter '" + name + "'") {}
};

class EmptyInput : public Error {
 public:
  EmptyInput() : Error("empty input") {}
};

}  // namespace shsnet
