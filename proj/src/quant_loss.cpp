#include "qmatch/quant_loss.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "qmatch/kernels.hpp"
#include "qmatch/rng.hpp"

namespace qmatch {

ReferenceSet select_references(const PointCloud& source,
                               std::optional<std::span<const int>> labels, std::size_t count,
                               std::uint64_t seed) {
  const std::size_t n = source.size();
  if (count == 0) throw InvalidArgument("select_references: count must be positive");
  if (count > n) throw InvalidArgument("select_references: count exceeds source size");

  Rng rng = Rng::stream(seed, "references");
  ReferenceSet refs;

  if (labels) {
    if (labels->size() != n) throw DimensionMismatch("select_references: one label per point");
    std::map<int, std::vector<std::size_t>> by_class;
    for (std::size_t i = 0; i < n; ++i) by_class[(*labels)[i]].push_back(i);
    const std::size_t classes = by_class.size();
    if (count % classes != 0)
      throw InvalidArgument("select_references: count must be a multiple of the class count");
    const std::size_t share = count / classes;
    std::vector<int> ref_labels;
    for (auto& [label, members] : by_class) {
      if (members.size() < share)
        throw InvalidArgument("select_references: class " + std::to_string(label) +
                              " has fewer points than its share");
      rng.shuffle(members);
      for (std::size_t j = 0; j < share; ++j) {
        refs.source_indices.push_back(members[j]);
        ref_labels.push_back(label);
      }
    }
    refs.labels = std::move(ref_labels);
  } else {
    std::vector<std::size_t> all(n);
    std::iota(all.begin(), all.end(), std::size_t{0});
    if (count < n) rng.shuffle(all);
    all.resize(count);
    refs.source_indices = std::move(all);
  }

  refs.quantiles = source.points().gather(refs.source_indices);
  refs.targets = Points(count, source.dim());
  const QuantileIndexField field(source);
  for (std::size_t r = 0; r < count; ++r) {
    const QuantileIndex u(field.at(refs.quantiles.row(r)));
    std::copy(u.value().begin(), u.value().end(), refs.targets.row(r).begin());
  }
  return refs;
}

namespace {

void check_inputs(const Points& adapted, const ReferenceSet& refs, const char* what) {
  if (adapted.empty()) throw InvalidArgument(std::string(what) + ": empty adapted cloud");
  if (refs.size() == 0) throw InvalidArgument(std::string(what) + ": empty reference set");
  require_same_dim(adapted.dim(), refs.dim(), what);
}

}  // namespace

LossBreakdown quantile_loss(const Points& adapted, const ReferenceSet& refs,
                            const BatchStatRegularizer& reg) {
  check_inputs(adapted, refs, "quantile_loss");
  const QuantileIndexField field(adapted);
  LossBreakdown out;
  out.per_reference.resize(refs.size());
  double acc = 0.0;
  for (std::size_t r = 0; r < refs.size(); ++r) {
    const Vec u = field.at(refs.quantiles.row(r));
    out.per_reference[r] = g_r(u, refs.targets.row(r));
    acc += out.per_reference[r];
  }
  out.total = acc / static_cast<double>(refs.size());
  if (reg.enabled()) {
    out.regularizer = batch_stat_penalty(adapted, reg.source_mean, reg.source_std);
    out.total += reg.weight * out.regularizer;
  }
  return out;
}

Points quantile_loss_grad(const Points& adapted, const ReferenceSet& refs,
                          const BatchStatRegularizer& reg) {
  check_inputs(adapted, refs, "quantile_loss_grad");
  const std::size_t n = adapted.size();
  const std::size_t d = adapted.dim();
  const QuantileIndexField field(adapted);
  const auto& kt = kernels::active();

  std::vector<double> grad_panel(n * d, 0.0);
  Vec sum(d), inv(n), w(d);
  const double nr = static_cast<double>(refs.size());
  for (std::size_t r = 0; r < refs.size(); ++r) {
    const auto z = refs.quantiles.row(r);
    const std::size_t count = field.direction_sum(z, sum.data(), inv.data());
    if (count == 0) continue;
    const double c = static_cast<double>(count);
    const auto u = refs.targets.row(r);
    for (std::size_t k = 0; k < d; ++k) w[k] = sum[k] / c - u[k];
    // d/dx (z - x)/|z - x| = -(I - v v^T)/|z - x|
    kt.projected_accumulate(field.panel().data(), n, d, z.data(), inv.data(), w.data(),
                            -2.0 / (c * nr), grad_panel.data());
  }

  Points grad(n, d);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < d; ++k) grad(i, k) = grad_panel[k * n + i];

  if (reg.enabled()) {
    const Points pg = batch_stat_penalty_grad(adapted, reg.source_mean, reg.source_std);
    for (std::size_t j = 0; j < grad.data().size(); ++j) grad.data()[j] += reg.weight * pg.data()[j];
  }
  return grad;
}

Vec h_r(std::span<const double> x, std::span<const double> z) {
  require_same_dim(x.size(), z.size(), "h_r");
  Vec v(x.size());
  double sq = 0.0;
  for (std::size_t k = 0; k < v.size(); ++k) {
    v[k] = z[k] - x[k];
    sq += v[k] * v[k];
  }
  const double len = std::sqrt(sq);
  if (!(len >= kCoincidenceEps)) throw DegenerateInput("h_r: point coincides with reference");
  for (double& c : v) c /= len;
  return v;
}

double g_r(std::span<const double> avg, std::span<const double> u) {
  return squared_distance(avg, u);
}

double composite_quantile_loss(const Points& adapted, const ReferenceSet& refs) {
  check_inputs(adapted, refs, "composite_quantile_loss");
  const std::size_t d = adapted.dim();
  double total = 0.0;
  for (std::size_t r = 0; r < refs.size(); ++r) {
    const auto z = refs.quantiles.row(r);
    Vec avg(d, 0.0);
    std::size_t count = 0;
    for (std::size_t i = 0; i < adapted.size(); ++i) {
      if (std::sqrt(squared_distance(adapted.row(i), z)) < kCoincidenceEps) continue;
      const Vec h = h_r(adapted.row(i), z);
      for (std::size_t k = 0; k < d; ++k) avg[k] += h[k];
      ++count;
    }
    if (count == 0) continue;
    for (double& v : avg) v /= static_cast<double>(count);
    total += g_r(avg, refs.targets.row(r));
  }
  return total / static_cast<double>(refs.size());
}

Points batch_direction_means(const Points& batch, const ReferenceSet& refs) {
  check_inputs(batch, refs, "batch_direction_means");
  const QuantileIndexField field(batch);
  const double b = static_cast<double>(batch.size());
  Points out(refs.size(), batch.dim());
  for (std::size_t r = 0; r < refs.size(); ++r) {
    auto row = out.row(r);
    field.direction_sum(refs.quantiles.row(r), row.data(), nullptr);
    for (double& v : row) v /= b;
  }
  return out;
}

Points composite_feature_grad(const Points& batch, const ReferenceSet& refs,
                              const Points& estimates) {
  check_inputs(batch, refs, "composite_feature_grad");
  if (estimates.size() != refs.size()) throw DimensionMismatch("composite_feature_grad: one estimate per reference");
  require_same_dim(estimates.dim(), batch.dim(), "composite_feature_grad");
  const std::size_t b = batch.size();
  const std::size_t d = batch.dim();
  const QuantileIndexField field(batch);
  const auto& kt = kernels::active();

  std::vector<double> grad_panel(b * d, 0.0);
  Vec sum(d), inv(b), w(d);
  const double scale = -2.0 / (static_cast<double>(refs.size()) * static_cast<double>(b));
  for (std::size_t r = 0; r < refs.size(); ++r) {
    const auto z = refs.quantiles.row(r);
    field.direction_sum(z, sum.data(), inv.data());
    const auto est = estimates.row(r);
    const auto u = refs.targets.row(r);
    for (std::size_t k = 0; k < d; ++k) w[k] = est[k] - u[k];
    kt.projected_accumulate(field.panel().data(), b, d, z.data(), inv.data(), w.data(), scale,
                            grad_panel.data());
  }
  Points grad(b, d);
  for (std::size_t i = 0; i < b; ++i)
    for (std::size_t k = 0; k < d; ++k) grad(i, k) = grad_panel[k * b + i];
  return grad;
}

Vec coordinate_mean(const Points& points) {
  if (points.empty()) throw InvalidArgument("coordinate_mean: empty");
  Vec m(points.dim(), 0.0);
  for (std::size_t i = 0; i < points.size(); ++i)
    for (std::size_t k = 0; k < points.dim(); ++k) m[k] += points(i, k);
  for (double& v : m) v /= static_cast<double>(points.size());
  return m;
}

Vec coordinate_std(const Points& points) {
  if (points.size() < 2) throw InvalidArgument("coordinate_std: need at least 2 points");
  const Vec m = coordinate_mean(points);
  Vec s(points.dim(), 0.0);
  for (std::size_t i = 0; i < points.size(); ++i)
    for (std::size_t k = 0; k < points.dim(); ++k) {
      const double c = points(i, k) - m[k];
      s[k] += c * c;
    }
  for (double& v : s) v = std::sqrt(v / static_cast<double>(points.size() - 1));
  return s;
}

namespace {

void check_moments(const Points& adapted, std::span<const double> mean, std::span<const double> std_) {
  if (adapted.size() < 2) throw InvalidArgument("batch_stat_penalty: need at least 2 points");
  require_same_dim(mean.size(), adapted.dim(), "batch_stat_penalty");
  require_same_dim(std_.size(), adapted.dim(), "batch_stat_penalty");
  for (double s : std_) {
    if (!(s > 0.0)) throw InvalidArgument("batch_stat_penalty: source std must be positive");
  }
}

}  // namespace

double batch_stat_penalty(const Points& adapted, std::span<const double> source_mean,
                          std::span<const double> source_std) {
  check_moments(adapted, source_mean, source_std);
  const Vec m = coordinate_mean(adapted);
  const Vec s = coordinate_std(adapted);
  return squared_distance(m, source_mean) + squared_distance(s, source_std);
}

Points batch_stat_penalty_grad(const Points& adapted, std::span<const double> source_mean,
                               std::span<const double> source_std) {
  check_moments(adapted, source_mean, source_std);
  const std::size_t n = adapted.size();
  const Vec m = coordinate_mean(adapted);
  const Vec s = coordinate_std(adapted);
  Points g(n, adapted.dim());
  const double nn = static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < adapted.dim(); ++k) {
      double v = 2.0 * (m[k] - source_mean[k]) / nn;
      if (s[k] > 0.0) v += 2.0 * (s[k] - source_std[k]) * (adapted(i, k) - m[k]) / ((nn - 1.0) * s[k]);
      g(i, k) = v;
    }
  return g;
}

}  // namespace qmatch
