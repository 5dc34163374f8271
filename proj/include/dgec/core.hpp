#pragma once

#include <complex>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>

#include <Eigen/Dense>

namespace dgec {

using cplx = std::complex<double>;
using CVector = Eigen::VectorXcd;
using RVector = Eigen::VectorXd;
using CMatrix = Eigen::MatrixXcd;
using RMatrix = Eigen::MatrixXd;

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Array dimensions or layouts that do not agree.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// An argument outside the operation's domain (negative threshold, R < 1, ...).
class ArgumentError : public Error {
 public:
  using Error::Error;
};

/// A numerical procedure could not produce a result.
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// 2D complex image in row-major order.
struct ComplexImage {
  std::size_t height = 0;
  std::size_t width = 0;
  CVector data;

  ComplexImage() = default;
  ComplexImage(std::size_t h, std::size_t w) : height(h), width(w), data(CVector::Zero(h * w)) {}
  ComplexImage(std::size_t h, std::size_t w, CVector values)
      : height(h), width(w), data(std::move(values)) {
    if (static_cast<std::size_t>(data.size()) != h * w) {
      throw ShapeError("image payload has " + std::to_string(data.size()) +
                       " entries, expected " + std::to_string(h * w));
    }
  }

  std::size_t size() const { return height * width; }
  cplx& operator()(std::size_t row, std::size_t col) { return data[row * width + col]; }
  const cplx& operator()(std::size_t row, std::size_t col) const { return data[row * width + col]; }
  bool same_shape(const ComplexImage& other) const {
    return height == other.height && width == other.width;
  }
};

inline void require_same_shape(const ComplexImage& a, const ComplexImage& b, const char* what) {
  if (!a.same_shape(b)) {
    throw ShapeError(std::string(what) + ": image shapes differ (" + std::to_string(a.height) + "x" +
                     std::to_string(a.width) + " vs " + std::to_string(b.height) + "x" +
                     std::to_string(b.width) + ")");
  }
}

inline void require_finite(const CVector& v, const char* what) {
  if (!v.allFinite()) {
    throw ArgumentError(std::string(what) + ": non-finite input");
  }
}

}  // namespace dgec
