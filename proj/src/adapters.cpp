#include "qmatch/adapters.hpp"

#include <cmath>
#include <string>

#include "qmatch/rng.hpp"

namespace qmatch {

std::string_view to_string(AdapterKind kind) {
  switch (kind) {
    case AdapterKind::identity: return "identity";
    case AdapterKind::affine: return "affine";
    case AdapterKind::mlp1: return "mlp1";
  }
  return "unknown";
}

AdapterKind parse_adapter_kind(std::string_view name) {
  if (name == "identity") return AdapterKind::identity;
  if (name == "affine") return AdapterKind::affine;
  if (name == "mlp1") return AdapterKind::mlp1;
  throw InvalidArgument("unknown adapter kind '" + std::string(name) + "'");
}

std::string_view to_string(FeatureKind kind) {
  switch (kind) {
    case FeatureKind::identity: return "identity";
    case FeatureKind::fixed_affine: return "fixed_affine";
    case FeatureKind::fixed_mlp: return "fixed_mlp";
  }
  return "unknown";
}

FeatureKind parse_feature_kind(std::string_view name) {
  if (name == "identity") return FeatureKind::identity;
  if (name == "fixed_affine") return FeatureKind::fixed_affine;
  if (name == "fixed_mlp") return FeatureKind::fixed_mlp;
  throw InvalidArgument("unknown feature map kind '" + std::string(name) + "'");
}

Adapter Adapter::identity(std::size_t d) {
  if (d == 0) throw InvalidArgument("Adapter: dimension must be positive");
  return Adapter(AdapterKind::identity, d, 0, {});
}

Adapter Adapter::affine(std::size_t d) {
  if (d == 0) throw InvalidArgument("Adapter: dimension must be positive");
  std::vector<double> p(d * d + d, 0.0);
  for (std::size_t i = 0; i < d; ++i) p[i * d + i] = 1.0;
  return Adapter(AdapterKind::affine, d, 0, std::move(p));
}

Adapter Adapter::affine(std::size_t d, std::span<const double> matrix, std::span<const double> bias) {
  if (matrix.size() != d * d || bias.size() != d) throw DimensionMismatch("Adapter::affine: parameter sizes");
  std::vector<double> p(matrix.begin(), matrix.end());
  p.insert(p.end(), bias.begin(), bias.end());
  return Adapter(AdapterKind::affine, d, 0, std::move(p));
}

Adapter Adapter::mlp1(std::size_t d, std::size_t hidden, std::uint64_t seed, double init_scale) {
  if (d == 0 || hidden == 0) throw InvalidArgument("Adapter::mlp1: sizes must be positive");
  std::vector<double> p(hidden * d + hidden + d * hidden, 0.0);
  Rng rng = Rng::stream(seed, "adapter.mlp1");
  for (std::size_t j = 0; j < hidden * d; ++j) p[j] = init_scale * rng.normal();
  return Adapter(AdapterKind::mlp1, d, hidden, std::move(p));
}

void Adapter::set_params(std::span<const double> params) {
  if (params.size() != params_.size()) throw DimensionMismatch("Adapter::set_params: wrong length");
  params_.assign(params.begin(), params.end());
}

Vec Adapter::forward(std::span<const double> x) const {
  require_same_dim(x.size(), d_, "Adapter::forward");
  const std::size_t d = d_;
  switch (kind_) {
    case AdapterKind::identity:
      return Vec(x.begin(), x.end());
    case AdapterKind::affine: {
      Vec y(d);
      const double* a = params_.data();
      const double* b = a + d * d;
      for (std::size_t i = 0; i < d; ++i) {
        double s = b[i];
        for (std::size_t j = 0; j < d; ++j) s += a[i * d + j] * x[j];
        y[i] = s;
      }
      return y;
    }
    case AdapterKind::mlp1: {
      const std::size_t h = h_;
      const double* w1 = params_.data();
      const double* b1 = w1 + h * d;
      const double* w2 = b1 + h;
      Vec act(h);
      for (std::size_t a = 0; a < h; ++a) {
        double s = b1[a];
        for (std::size_t j = 0; j < d; ++j) s += w1[a * d + j] * x[j];
        act[a] = std::tanh(s);
      }
      Vec y(x.begin(), x.end());
      for (std::size_t i = 0; i < d; ++i)
        for (std::size_t a = 0; a < h; ++a) y[i] += w2[i * h + a] * act[a];
      return y;
    }
  }
  return {};
}

Adapter::Gradient Adapter::backward(std::span<const double> x, std::span<const double> upstream) const {
  require_same_dim(x.size(), d_, "Adapter::backward");
  require_same_dim(upstream.size(), d_, "Adapter::backward");
  const std::size_t d = d_;
  Gradient g;
  switch (kind_) {
    case AdapterKind::identity:
      g.input.assign(upstream.begin(), upstream.end());
      return g;
    case AdapterKind::affine: {
      g.params.assign(d * d + d, 0.0);
      g.input.assign(d, 0.0);
      const double* a = params_.data();
      for (std::size_t i = 0; i < d; ++i) {
        for (std::size_t j = 0; j < d; ++j) {
          g.params[i * d + j] = upstream[i] * x[j];
          g.input[j] += a[i * d + j] * upstream[i];
        }
        g.params[d * d + i] = upstream[i];
      }
      return g;
    }
    case AdapterKind::mlp1: {
      const std::size_t h = h_;
      const double* w1 = params_.data();
      const double* b1 = w1 + h * d;
      const double* w2 = b1 + h;
      Vec act(h);
      for (std::size_t a = 0; a < h; ++a) {
        double s = b1[a];
        for (std::size_t j = 0; j < d; ++j) s += w1[a * d + j] * x[j];
        act[a] = std::tanh(s);
      }
      g.params.assign(params_.size(), 0.0);
      double* gw1 = g.params.data();
      double* gb1 = gw1 + h * d;
      double* gw2 = gb1 + h;
      g.input.assign(upstream.begin(), upstream.end());
      for (std::size_t a = 0; a < h; ++a) {
        double up_act = 0.0;
        for (std::size_t i = 0; i < d; ++i) {
          gw2[i * h + a] = upstream[i] * act[a];
          up_act += w2[i * h + a] * upstream[i];
        }
        const double up_pre = up_act * (1.0 - act[a] * act[a]);
        gb1[a] = up_pre;
        for (std::size_t j = 0; j < d; ++j) {
          gw1[a * d + j] = up_pre * x[j];
          g.input[j] += w1[a * d + j] * up_pre;
        }
      }
      return g;
    }
  }
  return g;
}

Points Adapter::forward(const Points& x) const {
  require_same_dim(x.dim(), d_, "Adapter::forward");
  Points out(x.size(), d_);
  for (std::size_t i = 0; i < x.size(); ++i) {
    const Vec y = forward(x.row(i));
    std::copy(y.begin(), y.end(), out.row(i).begin());
  }
  return out;
}

FeatureMap FeatureMap::identity(std::size_t d) {
  if (d == 0) throw InvalidArgument("FeatureMap: dimension must be positive");
  return FeatureMap(FeatureKind::identity, d, 0, d, {});
}

FeatureMap FeatureMap::fixed_affine(std::size_t d, std::size_t k, std::span<const double> matrix,
                                    std::span<const double> offset) {
  if (d == 0 || k == 0) throw InvalidArgument("FeatureMap: dimensions must be positive");
  if (matrix.size() != k * d || offset.size() != k) throw DimensionMismatch("FeatureMap::fixed_affine: parameter sizes");
  std::vector<double> p(matrix.begin(), matrix.end());
  p.insert(p.end(), offset.begin(), offset.end());
  return FeatureMap(FeatureKind::fixed_affine, d, 0, k, std::move(p));
}

FeatureMap FeatureMap::random_affine(std::size_t d, std::size_t k, std::uint64_t seed) {
  Rng rng = Rng::stream(seed, "feature.affine");
  std::vector<double> m(k * d), c(k);
  const double s = 1.0 / std::sqrt(static_cast<double>(d));
  for (double& v : m) v = s * rng.normal();
  for (double& v : c) v = 0.1 * rng.normal();
  return fixed_affine(d, k, m, c);
}

FeatureMap FeatureMap::random_mlp(std::size_t d, std::size_t hidden, std::size_t k, std::uint64_t seed) {
  if (d == 0 || k == 0 || hidden == 0) throw InvalidArgument("FeatureMap: dimensions must be positive");
  Rng rng = Rng::stream(seed, "feature.mlp");
  // M1 (h x d), c1 (h), M2 (k x h)
  std::vector<double> p(hidden * d + hidden + k * hidden);
  const double s1 = 1.0 / std::sqrt(static_cast<double>(d));
  const double s2 = 1.0 / std::sqrt(static_cast<double>(hidden));
  std::size_t j = 0;
  for (; j < hidden * d; ++j) p[j] = s1 * rng.normal();
  for (; j < hidden * d + hidden; ++j) p[j] = 0.1 * rng.normal();
  for (; j < p.size(); ++j) p[j] = s2 * rng.normal();
  return FeatureMap(FeatureKind::fixed_mlp, d, hidden, k, std::move(p));
}

Vec FeatureMap::forward(std::span<const double> x) const {
  require_same_dim(x.size(), d_, "FeatureMap::forward");
  switch (kind_) {
    case FeatureKind::identity:
      return Vec(x.begin(), x.end());
    case FeatureKind::fixed_affine: {
      Vec y(k_);
      const double* m = params_.data();
      const double* c = m + k_ * d_;
      for (std::size_t i = 0; i < k_; ++i) {
        double s = c[i];
        for (std::size_t j = 0; j < d_; ++j) s += m[i * d_ + j] * x[j];
        y[i] = s;
      }
      return y;
    }
    case FeatureKind::fixed_mlp: {
      const double* m1 = params_.data();
      const double* c1 = m1 + h_ * d_;
      const double* m2 = c1 + h_;
      Vec act(h_);
      for (std::size_t a = 0; a < h_; ++a) {
        double s = c1[a];
        for (std::size_t j = 0; j < d_; ++j) s += m1[a * d_ + j] * x[j];
        act[a] = std::tanh(s);
      }
      Vec y(k_, 0.0);
      for (std::size_t i = 0; i < k_; ++i)
        for (std::size_t a = 0; a < h_; ++a) y[i] += m2[i * h_ + a] * act[a];
      return y;
    }
  }
  return {};
}

Vec FeatureMap::vjp(std::span<const double> x, std::span<const double> upstream) const {
  require_same_dim(x.size(), d_, "FeatureMap::vjp");
  require_same_dim(upstream.size(), k_, "FeatureMap::vjp");
  switch (kind_) {
    case FeatureKind::identity:
      return Vec(upstream.begin(), upstream.end());
    case FeatureKind::fixed_affine: {
      Vec g(d_, 0.0);
      const double* m = params_.data();
      for (std::size_t i = 0; i < k_; ++i)
        for (std::size_t j = 0; j < d_; ++j) g[j] += m[i * d_ + j] * upstream[i];
      return g;
    }
    case FeatureKind::fixed_mlp: {
      const double* m1 = params_.data();
      const double* c1 = m1 + h_ * d_;
      const double* m2 = c1 + h_;
      Vec g(d_, 0.0);
      for (std::size_t a = 0; a < h_; ++a) {
        double s = c1[a];
        for (std::size_t j = 0; j < d_; ++j) s += m1[a * d_ + j] * x[j];
        const double t = std::tanh(s);
        double up = 0.0;
        for (std::size_t i = 0; i < k_; ++i) up += m2[i * h_ + a] * upstream[i];
        up *= 1.0 - t * t;
        for (std::size_t j = 0; j < d_; ++j) g[j] += m1[a * d_ + j] * up;
      }
      return g;
    }
  }
  return {};
}

Points FeatureMap::forward(const Points& x) const {
  require_same_dim(x.dim(), d_, "FeatureMap::forward");
  if (kind_ == FeatureKind::identity) return x;
  Points out(x.size(), k_);
  for (std::size_t i = 0; i < x.size(); ++i) {
    const Vec y = forward(x.row(i));
    std::copy(y.begin(), y.end(), out.row(i).begin());
  }
  return out;
}

Points compose_with_feature_map(const Adapter& adapter, const FeatureMap& fmap, const Points& inputs) {
  require_same_dim(fmap.in_dim(), adapter.dim(), "compose_with_feature_map");
  return fmap.forward(adapter.forward(inputs));
}

std::vector<double> chain_backward(const Adapter& adapter, const FeatureMap& fmap,
                                   const Points& inputs, const Points& feature_grads) {
  require_same_dim(fmap.in_dim(), adapter.dim(), "chain_backward");
  require_same_dim(feature_grads.dim(), fmap.out_dim(), "chain_backward");
  if (inputs.size() != feature_grads.size()) throw DimensionMismatch("chain_backward: one gradient per input");
  std::vector<double> total(adapter.param_count(), 0.0);
  for (std::size_t j = 0; j < inputs.size(); ++j) {
    const auto x = inputs.row(j);
    Vec up;
    if (fmap.kind() == FeatureKind::identity) {
      up.assign(feature_grads.row(j).begin(), feature_grads.row(j).end());
    } else {
      up = fmap.vjp(adapter.forward(x), feature_grads.row(j));
    }
    const auto g = adapter.backward(x, up);
    for (std::size_t p = 0; p < total.size(); ++p) total[p] += g.params[p];
  }
  return total;
}

}  // namespace qmatch
