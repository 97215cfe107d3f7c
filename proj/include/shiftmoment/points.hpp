#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "shiftmoment/errors.hpp"

namespace shiftmoment {

/// Contiguous row-major storage for points in [0,1]^d.
class PointSet {
 public:
  explicit PointSet(std::size_t dim = 1) : dim_(dim) {
    if (dim_ == 0) throw ConfigError("PointSet: dimension must be positive");
  }

  PointSet(std::size_t dim, std::vector<double> coords) : PointSet(dim) {
    if (coords.size() % dim_ != 0) throw ConfigError("PointSet: coordinate count not a multiple of dim");
    coords_ = std::move(coords);
  }

  static PointSet from_1d(std::vector<double> xs) { return PointSet(1, std::move(xs)); }

  std::size_t dim() const { return dim_; }
  std::size_t size() const { return coords_.size() / dim_; }
  bool empty() const { return coords_.empty(); }

  std::span<const double> operator[](std::size_t i) const { return {coords_.data() + i * dim_, dim_}; }

  void push_back(std::span<const double> x) {
    if (x.size() != dim_) throw ConfigError("PointSet: point dimension mismatch");
    coords_.insert(coords_.end(), x.begin(), x.end());
  }
  void push_back(double x) { push_back(std::span<const double>(&x, 1)); }

  void reserve(std::size_t n) { coords_.reserve(n * dim_); }

  const std::vector<double>& coords() const { return coords_; }

  /// Rows selected by index, in the given order.
  PointSet subset(std::span<const std::size_t> idx) const {
    PointSet out(dim_);
    out.reserve(idx.size());
    for (auto i : idx) out.push_back((*this)[i]);
    return out;
  }

  /// Throws DomainError if any coordinate lies outside [0,1].
  void require_unit_cube(const std::string& what) const {
    for (double c : coords_) {
      if (!(c >= 0.0 && c <= 1.0)) throw DomainError(what + ": point outside [0,1]^d");
    }
  }

 private:
  std::size_t dim_;
  std::vector<double> coords_;
};

inline void require_in_unit_cube(std::span<const double> x, const char* what) {
  for (double c : x) {
    if (!(c >= 0.0 && c <= 1.0)) throw DomainError(std::string(what) + ": point outside [0,1]^d");
  }
}

}  // namespace shiftmoment
