#include "qmatch/types.hpp"

#include <algorithm>
#include <cmath>

namespace qmatch {

double dot(std::span<const double> a, std::span<const double> b) {
  require_same_dim(a.size(), b.size(), "dot");
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) s += a[k] * b[k];
  return s;
}

double norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

double squared_distance(std::span<const double> a, std::span<const double> b) {
  require_same_dim(a.size(), b.size(), "squared_distance");
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    const double diff = a[k] - b[k];
    s += diff * diff;
  }
  return s;
}

Points::Points(std::size_t n, std::size_t d, std::vector<double> data)
    : n_(n), d_(d), data_(std::move(data)) {
  if (data_.size() != n * d) throw DimensionMismatch("Points: data size does not match n*d");
}

Points Points::from_rows(const std::vector<Vec>& rows) {
  if (rows.empty()) return {};
  const std::size_t d = rows.front().size();
  Points p(rows.size(), d);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    require_same_dim(rows[i].size(), d, "Points::from_rows");
    std::copy(rows[i].begin(), rows[i].end(), p.row(i).begin());
  }
  return p;
}

std::vector<double> Points::transposed() const {
  std::vector<double> out(data_.size());
  for (std::size_t i = 0; i < n_; ++i)
    for (std::size_t k = 0; k < d_; ++k) out[k * n_ + i] = data_[i * d_ + k];
  return out;
}

Points Points::gather(std::span<const std::size_t> indices) const {
  Points out(indices.size(), d_);
  for (std::size_t j = 0; j < indices.size(); ++j) {
    if (indices[j] >= n_) throw InvalidArgument("Points::gather: index out of range");
    const auto src = row(indices[j]);
    std::copy(src.begin(), src.end(), out.row(j).begin());
  }
  return out;
}

PointCloud::PointCloud(Points points) : points_(std::move(points)) {
  if (points_.dim() < 1) throw InvalidArgument("PointCloud: dimension must be >= 1");
  if (points_.size() < 2) throw InvalidArgument("PointCloud: need at least 2 points");
  for (double v : points_.data()) {
    if (!std::isfinite(v)) throw InvalidArgument("PointCloud: non-finite coordinate");
  }
  const auto first = points_.row(0);
  bool all_same = true;
  for (std::size_t i = 1; i < points_.size() && all_same; ++i) {
    const auto r = points_.row(i);
    all_same = std::equal(r.begin(), r.end(), first.begin());
  }
  if (all_same) throw DegenerateInput("PointCloud: all points identical");
}

Vec PointCloud::mean() const {
  Vec m(dim(), 0.0);
  for (std::size_t i = 0; i < size(); ++i) {
    const auto r = row(i);
    for (std::size_t k = 0; k < dim(); ++k) m[k] += r[k];
  }
  for (double& v : m) v /= static_cast<double>(size());
  return m;
}

}  // namespace qmatch
