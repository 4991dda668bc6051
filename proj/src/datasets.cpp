#include "qmatch/datasets.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <cstdio>
#include <numbers>
#include <ostream>
#include <set>
#include <string>

#include "qmatch/rng.hpp"

namespace qmatch {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

Eigen::Map<const RowMatrix> as_matrix(const std::vector<double>& m, std::size_t d) {
  return {m.data(), static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d)};
}

std::size_t square_dim(std::size_t entries) {
  const auto d = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(entries))));
  if (d * d != entries || d == 0) throw DimensionMismatch("matrix is not square");
  return d;
}

}  // namespace

Vec AffineMap::apply(std::span<const double> x) const {
  const std::size_t d = dim();
  require_same_dim(x.size(), d, "AffineMap::apply");
  Vec y(offset);
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < d; ++j) y[i] += matrix[i * d + j] * x[j];
  return y;
}

Points AffineMap::apply(const Points& x) const {
  Points out(x.size(), x.dim());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const Vec y = apply(x.row(i));
    std::copy(y.begin(), y.end(), out.row(i).begin());
  }
  return out;
}

AffineMap AffineMap::inverse() const {
  const std::size_t d = dim();
  const auto m = as_matrix(matrix, d);
  const double det = m.determinant();
  if (!(std::abs(det) > 1e-9)) throw DegenerateInput("AffineMap::inverse: singular matrix");
  const RowMatrix inv = m.inverse();
  AffineMap out;
  out.matrix.assign(inv.data(), inv.data() + d * d);
  out.offset.assign(d, 0.0);
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < d; ++j) out.offset[i] -= out.matrix[i * d + j] * offset[j];
  return out;
}

AffineMap AffineMap::after(const AffineMap& first) const {
  const std::size_t d = dim();
  require_same_dim(first.dim(), d, "AffineMap::after");
  const RowMatrix m = as_matrix(matrix, d) * as_matrix(first.matrix, d);
  AffineMap out;
  out.matrix.assign(m.data(), m.data() + d * d);
  out.offset = apply(first.offset);
  return out;
}

AffineMap AffineMap::identity(std::size_t d) {
  AffineMap out;
  out.matrix.assign(d * d, 0.0);
  for (std::size_t i = 0; i < d; ++i) out.matrix[i * d + i] = 1.0;
  out.offset.assign(d, 0.0);
  return out;
}

int LabeledCloud::class_count() const {
  return static_cast<int>(std::set<int>(labels.begin(), labels.end()).size());
}

std::vector<BlobSpec> default_six_blobs(double radius) {
  std::vector<BlobSpec> blobs;
  for (int c = 0; c < 6; ++c) {
    const double a = std::numbers::pi / 3.0 * c;
    const double scale = 0.5 + 0.2 * c;
    const double tilt = std::numbers::pi / 6.0 * c;
    const double ct = std::cos(tilt), st = std::sin(tilt);
    // scale * R(tilt) diag(1, 0.5) R(tilt)^T
    const double l1 = scale, l2 = 0.5 * scale;
    BlobSpec b;
    b.mean = {radius * std::cos(a), radius * std::sin(a)};
    b.covariance = {l1 * ct * ct + l2 * st * st, (l1 - l2) * ct * st,
                    (l1 - l2) * ct * st, l1 * st * st + l2 * ct * ct};
    b.count = 80 + 2 * static_cast<std::size_t>(c);
    blobs.push_back(std::move(b));
  }
  return blobs;
}

LabeledCloud six_blobs(std::uint64_t seed, std::span<const BlobSpec> blobs) {
  if (blobs.size() != 6) throw InvalidArgument("six_blobs: exactly 6 classes required");
  const std::size_t d = blobs.front().mean.size();
  if (d == 0) throw InvalidArgument("six_blobs: empty mean");
  std::size_t total = 0;
  for (const auto& b : blobs) {
    require_same_dim(b.mean.size(), d, "six_blobs");
    if (b.covariance.size() != d * d) throw DimensionMismatch("six_blobs: covariance size");
    if (b.count < 10) throw InvalidArgument("six_blobs: each class needs at least 10 points");
    total += b.count;
  }

  Rng rng = Rng::stream(seed, "six_blobs");
  LabeledCloud out;
  out.cloud = Points(total, d);
  out.labels.reserve(total);
  std::size_t row = 0;
  Vec z(d);
  for (std::size_t c = 0; c < blobs.size(); ++c) {
    const auto& b = blobs[c];
    const Eigen::LLT<RowMatrix> llt(as_matrix(b.covariance, d));
    if (llt.info() != Eigen::Success) throw DegenerateInput("six_blobs: covariance not positive definite");
    const RowMatrix l = llt.matrixL();
    for (std::size_t i = 0; i < b.count; ++i, ++row) {
      for (double& v : z) v = rng.normal();
      auto dst = out.cloud.row(row);
      for (std::size_t k = 0; k < d; ++k) {
        double s = b.mean[k];
        for (std::size_t j = 0; j <= k; ++j) s += l(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(j)) * z[j];
        dst[k] = s;
      }
      out.labels.push_back(static_cast<int>(c));
    }
  }
  return out;
}

LabeledCloud two_moons(std::uint64_t seed, std::size_t n, double noise_sigma) {
  if (n < 4) throw InvalidArgument("two_moons: need at least 4 points");
  if (n % 2 != 0) throw InvalidArgument("two_moons: n must be even");
  if (noise_sigma < 0.0) throw InvalidArgument("two_moons: negative noise");
  const std::size_t half = n / 2;
  Rng rng = Rng::stream(seed, "two_moons");
  LabeledCloud out;
  out.cloud = Points(n, 2);
  out.labels.resize(n);
  constexpr double cx = 0.5, cy = 0.25;
  for (std::size_t i = 0; i < half; ++i) {
    const double t = std::numbers::pi * static_cast<double>(i) / static_cast<double>(half - 1);
    out.cloud(i, 0) = std::cos(t) - cx;
    out.cloud(i, 1) = std::sin(t) - cy;
    out.labels[i] = 0;
    out.cloud(half + i, 0) = 1.0 - std::cos(t) - cx;
    out.cloud(half + i, 1) = 0.5 - std::sin(t) - cy;
    out.labels[half + i] = 1;
  }
  if (noise_sigma > 0.0) {
    for (double& v : out.cloud.data()) v += noise_sigma * rng.normal();
  }
  return out;
}

std::string_view to_string(CorruptionKind kind) {
  switch (kind) {
    case CorruptionKind::linear: return "linear";
    case CorruptionKind::rotation: return "rotation";
    case CorruptionKind::shift: return "shift";
    case CorruptionKind::gaussian_noise: return "gaussian_noise";
  }
  return "unknown";
}

CorruptionKind parse_corruption_kind(std::string_view name) {
  if (name == "linear") return CorruptionKind::linear;
  if (name == "rotation") return CorruptionKind::rotation;
  if (name == "shift") return CorruptionKind::shift;
  if (name == "gaussian_noise") return CorruptionKind::gaussian_noise;
  throw InvalidArgument("unknown corruption kind '" + std::string(name) + "'");
}

Corruption Corruption::linear(std::vector<double> matrix, Vec offset) {
  Corruption c;
  c.kind = CorruptionKind::linear;
  c.matrix = std::move(matrix);
  c.offset = std::move(offset);
  return c;
}

Corruption Corruption::rotation(double angle_rad) {
  Corruption c;
  c.kind = CorruptionKind::rotation;
  c.angle_rad = angle_rad;
  return c;
}

Corruption Corruption::shift(Vec offset) {
  Corruption c;
  c.kind = CorruptionKind::shift;
  c.offset = std::move(offset);
  return c;
}

Corruption Corruption::gaussian_noise(double sigma) {
  Corruption c;
  c.kind = CorruptionKind::gaussian_noise;
  c.sigma = sigma;
  return c;
}

LabeledCloud apply_corruption(const LabeledCloud& clean, const Corruption& c, std::uint64_t seed) {
  const std::size_t d = clean.cloud.dim();
  LabeledCloud out;
  out.labels = clean.labels;

  if (c.kind == CorruptionKind::gaussian_noise) {
    if (c.sigma < 0.0) throw InvalidArgument("gaussian_noise: negative sigma");
    Rng rng = Rng::stream(seed, "corruption.noise");
    out.cloud = clean.cloud;
    for (double& v : out.cloud.data()) v += c.sigma * rng.normal();
    out.inverse = clean.inverse;
    return out;
  }

  AffineMap map;
  switch (c.kind) {
    case CorruptionKind::linear: {
      if (square_dim(c.matrix.size()) != d) throw DimensionMismatch("linear corruption: matrix size");
      map.matrix = c.matrix;
      map.offset = c.offset.empty() ? Vec(d, 0.0) : c.offset;
      require_same_dim(map.offset.size(), d, "linear corruption");
      break;
    }
    case CorruptionKind::rotation: {
      if (d != 2) throw DimensionMismatch("rotation corruption: 2-D clouds only");
      const double ca = std::cos(c.angle_rad), sa = std::sin(c.angle_rad);
      map.matrix = {ca, -sa, sa, ca};
      map.offset = {0.0, 0.0};
      break;
    }
    case CorruptionKind::shift: {
      require_same_dim(c.offset.size(), d, "shift corruption");
      map = AffineMap::identity(d);
      map.offset = c.offset;
      break;
    }
    case CorruptionKind::gaussian_noise:
      break;
  }
  const AffineMap inv = map.inverse();  // throws on singular maps
  out.cloud = map.apply(clean.cloud);
  out.inverse = clean.inverse ? clean.inverse->after(inv) : inv;
  return out;
}

void write_cloud_csv(std::ostream& out, const LabeledCloud& cloud) {
  out << "class";
  for (std::size_t k = 0; k < cloud.cloud.dim(); ++k) out << ",x" << (k + 1);
  out << '\n';
  char buf[32];
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    out << (cloud.labels.empty() ? 0 : cloud.labels[i]);
    for (double v : cloud.cloud.row(i)) {
      std::snprintf(buf, sizeof buf, "%.17g", v);
      out << ',' << buf;
    }
    out << '\n';
  }
}

}  // namespace qmatch
