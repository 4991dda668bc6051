#include "qmatch/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <ostream>

#include "qmatch/memory_bank.hpp"
#include "qmatch/rng.hpp"

namespace qmatch {

void TrainConfig::validate(std::size_t source_size, std::size_t target_size) const {
  if (epochs < 1) throw InvalidArgument("train: epochs must be >= 1");
  if (!(learning_rate > 0.0)) throw InvalidArgument("train: learning_rate must be positive");
  if (momentum < 0.0 || momentum >= 1.0) throw InvalidArgument("train: momentum must be in [0, 1)");
  if (reference_count == 0 || reference_count > source_size)
    throw InvalidArgument("train: reference_count must be in [1, source size]");
  if (!full_batch && (batch_size < 1 || batch_size > target_size))
    throw InvalidArgument("train: batch_size must be in [1, target size]");
  if (snapshot_every < 1) throw InvalidArgument("train: snapshot_every must be >= 1");
  if (reg_weight < 0.0) throw InvalidArgument("train: reg_weight must be non-negative");
}

bool RunTrace::has_flag(std::string_view flag) const {
  return std::find(flags.begin(), flags.end(), flag) != flags.end();
}

SgdMomentum::SgdMomentum(double learning_rate, double momentum, std::size_t param_count)
    : lr_(learning_rate), mu_(momentum), velocity_(param_count, 0.0) {}

bool SgdMomentum::step(Adapter& adapter, std::span<const double> grads) {
  if (grads.size() != velocity_.size()) throw DimensionMismatch("sgd_step: gradient length");
  if (adapter.param_count() != velocity_.size()) throw DimensionMismatch("sgd_step: parameter length");
  for (double g : grads) {
    if (!std::isfinite(g)) return false;
  }
  auto& p = adapter.mutable_params();
  for (std::size_t i = 0; i < p.size(); ++i) {
    velocity_[i] = mu_ * velocity_[i] + grads[i];
    p[i] -= lr_ * velocity_[i];
  }
  return true;
}

EpochRecord evaluate_epoch(const Adapter& adapter, const FeatureMap& fmap,
                           const PointCloud& source_feats, const Points& target,
                           const ReferenceSet& refs, const std::optional<oracles::Pairing>& pairing,
                           bool compute_wasserstein, const BatchStatRegularizer& reg) {
  const Points adapted = compose_with_feature_map(adapter, fmap, target);
  require_same_dim(adapted.dim(), source_feats.dim(), "evaluate_epoch");
  EpochRecord rec;
  rec.quantile_loss = quantile_loss(adapted, refs, reg).total;
  if (pairing) rec.paired_mse = oracles::paired_mse(source_feats.points(), adapted, *pairing);
  if (compute_wasserstein && adapted.size() == source_feats.size() &&
      adapted.size() <= oracles::kMaxExactTransport) {
    rec.wasserstein2 = oracles::wasserstein2(source_feats.points(), adapted).distance();
  }
  return rec;
}

namespace {

double l2(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

class Clock {
 public:
  explicit Clock(bool enabled) : enabled_(enabled), start_(std::chrono::steady_clock::now()) {}
  double ms() const {
    if (!enabled_) return 0.0;
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  bool enabled_;
  std::chrono::steady_clock::time_point start_;
};

}  // namespace

TrainResult train(const TrainInputs& in, Adapter adapter, const FeatureMap& fmap,
                  const TrainConfig& cfg) {
  const PointCloud& source = in.source_feats;
  const Points& target = in.target;
  cfg.validate(source.size(), target.size());
  require_same_dim(fmap.out_dim(), source.dim(), "train: feature map output vs source features");
  require_same_dim(target.dim(), adapter.dim(), "train: target vs adapter");
  require_same_dim(fmap.in_dim(), adapter.dim(), "train: feature map input vs adapter");
  if (in.pairing && in.pairing->size() != target.size())
    throw InvalidArgument("train: pairing must cover the target cloud");

  ReferenceSet refs = select_references(source, in.source_labels, cfg.reference_count, cfg.seed);

  BatchStatRegularizer reg;
  if (cfg.reg_weight > 0.0) {
    reg.weight = cfg.reg_weight;
    reg.source_mean = coordinate_mean(source.points());
    reg.source_std = coordinate_std(source.points());
  }

  const Clock clock(cfg.record_wall_time);
  auto wants_w2 = [&](std::size_t epoch) {
    return epoch == 0 || epoch == cfg.epochs ||
           (cfg.wasserstein_every > 0 && epoch % cfg.wasserstein_every == 0);
  };

  RunTrace trace;
  if (target.size() != source.size() || target.size() > oracles::kMaxExactTransport)
    trace.flags.emplace_back("wasserstein_skipped");
  trace.initial = evaluate_epoch(adapter, fmap, source, target, refs, in.pairing, wants_w2(0), reg);
  trace.initial.wall_ms = clock.ms();

  SgdMomentum opt(cfg.learning_rate, cfg.momentum, adapter.param_count());
  Rng batch_rng = Rng::stream(cfg.seed, "batches");
  const std::size_t m = target.size();
  MemoryBank bank;
  if (!cfg.full_batch) bank = refresh_snapshot(std::move(bank), compose_with_feature_map(adapter, fmap, target), refs);

  std::vector<std::size_t> order(m);
  std::size_t steps = 0;
  bool aborted = false;
  for (std::size_t epoch = 1; epoch <= cfg.epochs && !aborted; ++epoch) {
    double last_grad_norm = 0.0;

    if (cfg.full_batch) {
      const Points feats = compose_with_feature_map(adapter, fmap, target);
      const Points gfeat = quantile_loss_grad(feats, refs, reg);
      const auto g = chain_backward(adapter, fmap, target, gfeat);
      last_grad_norm = l2(g);
      if (!opt.step(adapter, g)) {
        trace.flags.push_back("nonfinite_gradient_epoch_" + std::to_string(epoch));
        aborted = true;
      }
      ++steps;
    } else {
      std::iota(order.begin(), order.end(), std::size_t{0});
      batch_rng.shuffle(order);
      for (std::size_t start = 0; start < m && !aborted; start += cfg.batch_size) {
        const std::size_t end = std::min(m, start + cfg.batch_size);
        const std::span<const std::size_t> batch(order.data() + start, end - start);
        const Points inputs = target.gather(batch);
        const Points feats = compose_with_feature_map(adapter, fmap, inputs);
        bank.touch(batch, feats);

        const Points cur = batch_direction_means(feats, refs);
        const Points snap = batch_direction_means(bank.snapshot_features.gather(batch), refs);
        const Points est = control_variate_estimate(bank, batch, cur, snap);
        Points gfeat = composite_feature_grad(feats, refs, est);
        if (reg.enabled() && feats.size() >= 2) {
          const Points pg = batch_stat_penalty_grad(feats, reg.source_mean, reg.source_std);
          for (std::size_t j = 0; j < gfeat.data().size(); ++j) gfeat.data()[j] += reg.weight * pg.data()[j];
        }
        const auto g = chain_backward(adapter, fmap, inputs, gfeat);
        last_grad_norm = l2(g);
        if (!opt.step(adapter, g)) {
          trace.flags.push_back("nonfinite_gradient_epoch_" + std::to_string(epoch));
          aborted = true;
        }
        ++steps;
        if (cfg.snapshot_every_steps > 0 && steps % cfg.snapshot_every_steps == 0)
          bank = refresh_snapshot(std::move(bank), compose_with_feature_map(adapter, fmap, target), refs);
      }
    }

    EpochRecord rec = evaluate_epoch(adapter, fmap, source, target, refs, in.pairing, wants_w2(epoch), reg);
    rec.epoch = epoch;
    rec.grad_norm = last_grad_norm;
    if (!cfg.full_batch) {
      const Points now = compose_with_feature_map(adapter, fmap, target);
      const auto diag = estimator_variance(now, bank.snapshot_features, refs, cfg.batch_size,
                                           EstimatorMode::closed_form);
      rec.crude_var = diag.crude_variance;
      rec.control_var = diag.control_variance;
      if (epoch % cfg.snapshot_every == 0) bank = refresh_snapshot(std::move(bank), now, refs);
    }
    rec.wall_ms = clock.ms();
    trace.epochs.push_back(rec);
  }

  return {std::move(adapter), std::move(trace), std::move(refs)};
}

double pearson_correlation(std::span<const double> x, std::span<const double> y) {
  require_same_dim(x.size(), y.size(), "pearson_correlation");
  if (x.size() < 2) throw InvalidArgument("pearson_correlation: need at least 2 samples");
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

namespace {

void put(std::ostream& out, const std::optional<double>& v) {
  if (!v) return;
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", *v);
  out << buf;
}

}  // namespace

void write_trace_csv(std::ostream& out, const RunTrace& trace, bool include_wall_time) {
  out << "epoch,quantile_loss,paired_mse,wasserstein2,crude_var,control_var,grad_norm,wall_ms\n";
  for (const auto& r : trace.epochs) {
    out << r.epoch << ',';
    put(out, r.quantile_loss);
    out << ',';
    put(out, r.paired_mse);
    out << ',';
    put(out, r.wasserstein2);
    out << ',';
    put(out, r.crude_var);
    out << ',';
    put(out, r.control_var);
    out << ',';
    put(out, r.grad_norm);
    out << ',';
    if (include_wall_time) put(out, r.wall_ms);
    out << '\n';
  }
}

}  // namespace qmatch
