#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "qmatch/types.hpp"

namespace qmatch {

// x -> M x + c, M row-major d x d.
struct AffineMap {
  std::vector<double> matrix;
  Vec offset;

  std::size_t dim() const { return offset.size(); }
  Vec apply(std::span<const double> x) const;
  Points apply(const Points& x) const;
  AffineMap inverse() const;
  // (*this) after `first`.
  AffineMap after(const AffineMap& first) const;
  static AffineMap identity(std::size_t d);
};

// Points with class ids 0..C-1. Row i of a corrupted cloud is the image of
// row i of its clean twin, so the pairing is the identity.
struct LabeledCloud {
  Points cloud;
  std::vector<int> labels;
  // Inverse of the deterministic part of the corruptions applied so far.
  std::optional<AffineMap> inverse;

  std::size_t size() const { return cloud.size(); }
  int class_count() const;
};

struct BlobSpec {
  Vec mean;
  std::vector<double> covariance;  // d x d, symmetric positive definite
  std::size_t count = 0;
};

// Means on a hexagon of the given radius, counts 80..90, covariance scales
// from 0.5 to 1.5 with rotated anisotropy.
std::vector<BlobSpec> default_six_blobs(double radius = 8.0);

LabeledCloud six_blobs(std::uint64_t seed, std::span<const BlobSpec> blobs);

// Two interleaved unit half-circles, centred so that a 180 degree rotation
// about the origin maps one noise-free arc onto the other.
LabeledCloud two_moons(std::uint64_t seed, std::size_t n, double noise_sigma);

enum class CorruptionKind { linear, rotation, shift, gaussian_noise };

std::string_view to_string(CorruptionKind kind);
CorruptionKind parse_corruption_kind(std::string_view name);

struct Corruption {
  CorruptionKind kind = CorruptionKind::shift;
  std::vector<double> matrix;  // linear
  Vec offset;                  // linear (optional) / shift
  double angle_rad = 0.0;      // rotation, 2-D only
  double sigma = 0.0;          // gaussian_noise

  static Corruption linear(std::vector<double> matrix, Vec offset = {});
  static Corruption rotation(double angle_rad);
  static Corruption shift(Vec offset);
  static Corruption gaussian_noise(double sigma);
};

LabeledCloud apply_corruption(const LabeledCloud& clean, const Corruption& c, std::uint64_t seed);

// CSV with header "class,x1,...,xd".
void write_cloud_csv(std::ostream& out, const LabeledCloud& cloud);

}  // namespace qmatch
