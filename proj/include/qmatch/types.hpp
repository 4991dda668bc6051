#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace qmatch {

using Vec = std::vector<double>;

struct DimensionMismatch : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct DegenerateInput : std::domain_error {
  using std::domain_error::domain_error;
};

struct InvalidArgument : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

inline void require_same_dim(std::size_t a, std::size_t b, const char* what) {
  if (a != b) {
    throw DimensionMismatch(std::string(what) + ": dimension " + std::to_string(a) +
                            " != " + std::to_string(b));
  }
}

double dot(std::span<const double> a, std::span<const double> b);
double norm(std::span<const double> a);
double squared_distance(std::span<const double> a, std::span<const double> b);

// Dense n x d block of row-major coordinates. No invariants beyond shape;
// used for gradients, feature batches and raw inputs.
class Points {
 public:
  Points() = default;
  Points(std::size_t n, std::size_t d) : n_(n), d_(d), data_(n * d, 0.0) {}
  Points(std::size_t n, std::size_t d, std::vector<double> data);

  static Points from_rows(const std::vector<Vec>& rows);

  std::size_t size() const { return n_; }
  std::size_t dim() const { return d_; }
  bool empty() const { return n_ == 0; }

  std::span<const double> row(std::size_t i) const { return {data_.data() + i * d_, d_}; }
  std::span<double> row(std::size_t i) { return {data_.data() + i * d_, d_}; }
  double operator()(std::size_t i, std::size_t k) const { return data_[i * d_ + k]; }
  double& operator()(std::size_t i, std::size_t k) { return data_[i * d_ + k]; }

  const std::vector<double>& data() const { return data_; }
  std::vector<double>& data() { return data_; }

  // Column-major copy: coordinate k of point i at [k * n + i].
  std::vector<double> transposed() const;

  Points gather(std::span<const std::size_t> indices) const;

  friend bool operator==(const Points&, const Points&) = default;

 private:
  std::size_t n_ = 0;
  std::size_t d_ = 0;
  std::vector<double> data_;
};

// A finite sample standing for a distribution: n >= 2 finite points of a
// common dimension d >= 1, not all identical.
class PointCloud {
 public:
  explicit PointCloud(Points points);
  static PointCloud from_rows(const std::vector<Vec>& rows) {
    return PointCloud(Points::from_rows(rows));
  }

  std::size_t size() const { return points_.size(); }
  std::size_t dim() const { return points_.dim(); }
  std::span<const double> row(std::size_t i) const { return points_.row(i); }
  const Points& points() const { return points_; }

  Vec mean() const;

 private:
  Points points_;
};

}  // namespace qmatch
