#pragma once

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "qmatch/types.hpp"

namespace qmatch {

enum class AdapterKind { identity, affine, mlp1 };

std::string_view to_string(AdapterKind kind);
AdapterKind parse_adapter_kind(std::string_view name);

// Trainable map T_theta: R^d -> R^d.
//
// Parameter layout (flat, row-major):
//   identity: empty
//   affine:   A (d x d), b (d)                 T(x) = A x + b
//   mlp1:     W1 (h x d), b1 (h), W2 (d x h)   T(x) = x + W2 tanh(W1 x + b1)
//
// Every factory except the explicit affine one starts at the exact identity.
class Adapter {
 public:
  struct Gradient {
    std::vector<double> params;
    Vec input;
  };

  static Adapter identity(std::size_t d);
  static Adapter affine(std::size_t d);
  static Adapter affine(std::size_t d, std::span<const double> matrix, std::span<const double> bias);
  // W1 ~ N(0, init_scale^2) from `seed`, b1 = 0, W2 = 0.
  static Adapter mlp1(std::size_t d, std::size_t hidden, std::uint64_t seed, double init_scale = 0.1);

  AdapterKind kind() const { return kind_; }
  std::size_t dim() const { return d_; }
  std::size_t hidden() const { return h_; }
  std::size_t param_count() const { return params_.size(); }

  std::span<const double> params() const { return params_; }
  void set_params(std::span<const double> params);
  std::vector<double>& mutable_params() { return params_; }

  Vec forward(std::span<const double> x) const;
  // d<upstream, T(x)>/d theta and d<upstream, T(x)>/dx.
  Gradient backward(std::span<const double> x, std::span<const double> upstream) const;

  Points forward(const Points& x) const;

 private:
  Adapter(AdapterKind kind, std::size_t d, std::size_t h, std::vector<double> params)
      : kind_(kind), d_(d), h_(h), params_(std::move(params)) {}

  AdapterKind kind_;
  std::size_t d_;
  std::size_t h_;
  std::vector<double> params_;
};

enum class FeatureKind { identity, fixed_affine, fixed_mlp };

std::string_view to_string(FeatureKind kind);
FeatureKind parse_feature_kind(std::string_view name);

// Frozen feature extractor f: R^d -> R^k. Immutable after construction.
//   fixed_affine: f(x) = M x + c
//   fixed_mlp:    f(x) = M2 tanh(M1 x + c1)
class FeatureMap {
 public:
  static FeatureMap identity(std::size_t d);
  static FeatureMap fixed_affine(std::size_t d, std::size_t k, std::span<const double> matrix,
                                 std::span<const double> offset);
  // Entries N(0, 1/d), offset N(0, 0.1^2).
  static FeatureMap random_affine(std::size_t d, std::size_t k, std::uint64_t seed);
  static FeatureMap random_mlp(std::size_t d, std::size_t hidden, std::size_t k, std::uint64_t seed);

  FeatureKind kind() const { return kind_; }
  std::size_t in_dim() const { return d_; }
  std::size_t out_dim() const { return k_; }

  Vec forward(std::span<const double> x) const;
  // J_f(x)^T upstream.
  Vec vjp(std::span<const double> x, std::span<const double> upstream) const;

  Points forward(const Points& x) const;

 private:
  FeatureMap(FeatureKind kind, std::size_t d, std::size_t h, std::size_t k, std::vector<double> params)
      : kind_(kind), d_(d), h_(h), k_(k), params_(std::move(params)) {}

  FeatureKind kind_;
  std::size_t d_;
  std::size_t h_;
  std::size_t k_;
  std::vector<double> params_;
};

// {f(T(x_j))}.
Points compose_with_feature_map(const Adapter& adapter, const FeatureMap& fmap, const Points& inputs);

// Sum over j of d<feature_grads_j, f(T(x_j))>/d theta.
std::vector<double> chain_backward(const Adapter& adapter, const FeatureMap& fmap,
                                   const Points& inputs, const Points& feature_grads);

}  // namespace qmatch
