#include "dnres/tensor.hpp"

#include <sstream>

namespace dnres {

const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::shape_mismatch: return "shape_mismatch";
    case ErrorCode::invalid_argument: return "invalid_argument";
    case ErrorCode::numeric: return "numeric";
    case ErrorCode::format: return "format";
    case ErrorCode::io: return "io";
    case ErrorCode::topology: return "topology";
  }
  return "unknown";
}

Error::Error(ErrorCode code, const std::string& message) : std::runtime_error(message), code_(code) {}

namespace {
std::string shape_message(const std::string& op, const std::string& dim, std::size_t expected,
                          std::size_t actual) {
  std::ostringstream os;
  os << op << ": " << dim << " mismatch (expected " << expected << ", got " << actual << ")";
  return os.str();
}
}  // namespace

ShapeError::ShapeError(std::string operation, std::string dimension, std::size_t expected, std::size_t actual)
    : Error(ErrorCode::shape_mismatch, shape_message(operation, dimension, expected, actual)),
      operation_(std::move(operation)),
      dimension_(std::move(dimension)),
      expected_(expected),
      actual_(actual) {}

std::string Shape::str() const {
  std::ostringstream os;
  os << n << "x" << c << "x" << h << "x" << w;
  return os.str();
}

void require_same_shape(const char* operation, const Shape& expected, const Shape& actual) {
  if (expected.n != actual.n) throw ShapeError(operation, "batch", expected.n, actual.n);
  if (expected.c != actual.c) throw ShapeError(operation, "channels", expected.c, actual.c);
  if (expected.h != actual.h) throw ShapeError(operation, "height", expected.h, actual.h);
  if (expected.w != actual.w) throw ShapeError(operation, "width", expected.w, actual.w);
}

}  // namespace dnres
