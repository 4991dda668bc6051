#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "qmatch/adapters.hpp"
#include "qmatch/oracles.hpp"
#include "qmatch/quant_loss.hpp"
#include "qmatch/types.hpp"

namespace qmatch {

struct TrainConfig {
  std::size_t epochs = 1000;
  std::size_t batch_size = 32;
  double learning_rate = 1e-2;
  double momentum = 0.9;
  std::size_t reference_count = 60;
  double reg_weight = 0.0;
  std::uint64_t seed = 0;
  // Snapshot refresh cadence for minibatch runs, in epochs; a nonzero
  // snapshot_every_steps additionally refreshes every that many steps.
  std::size_t snapshot_every = 1;
  std::size_t snapshot_every_steps = 0;
  bool full_batch = true;
  std::size_t wasserstein_every = 10;
  // Off by default so traces are byte-reproducible.
  bool record_wall_time = false;

  void validate(std::size_t source_size, std::size_t target_size) const;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double quantile_loss = 0.0;
  std::optional<double> paired_mse;
  std::optional<double> wasserstein2;
  std::optional<double> crude_var;
  std::optional<double> control_var;
  double grad_norm = 0.0;
  double wall_ms = 0.0;
};

struct RunTrace {
  EpochRecord initial;               // before any update
  std::vector<EpochRecord> epochs;   // after each epoch, epoch = 1..N
  std::vector<std::string> flags;

  const EpochRecord& final_record() const { return epochs.empty() ? initial : epochs.back(); }
  bool has_flag(std::string_view flag) const;
};

struct TrainInputs {
  const PointCloud& source_feats;
  std::optional<std::span<const int>> source_labels;
  const Points& target;
  std::optional<oracles::Pairing> pairing;
};

struct TrainResult {
  Adapter adapter;
  RunTrace trace;
  ReferenceSet refs;
};

// Classical momentum: v <- mu v + g; theta <- theta - lr v.
class SgdMomentum {
 public:
  SgdMomentum(double learning_rate, double momentum, std::size_t param_count);

  // Returns false and leaves everything untouched on a non-finite gradient.
  bool step(Adapter& adapter, std::span<const double> grads);
  const std::vector<double>& velocity() const { return velocity_; }

 private:
  double lr_;
  double mu_;
  std::vector<double> velocity_;
};

// Metrics of the adapted target against the source features. W2 is exact
// and only computed when requested and both clouds have the same size of
// at most 512 points.
EpochRecord evaluate_epoch(const Adapter& adapter, const FeatureMap& fmap,
                           const PointCloud& source_feats, const Points& target,
                           const ReferenceSet& refs, const std::optional<oracles::Pairing>& pairing,
                           bool compute_wasserstein, const BatchStatRegularizer& reg = {});

TrainResult train(const TrainInputs& inputs, Adapter adapter, const FeatureMap& fmap,
                  const TrainConfig& cfg);

double pearson_correlation(std::span<const double> x, std::span<const double> y);

// Columns: epoch,quantile_loss,paired_mse,wasserstein2,crude_var,control_var,grad_norm,wall_ms
// Missing values are empty fields; wall_ms is empty unless timing was recorded.
void write_trace_csv(std::ostream& out, const RunTrace& trace, bool include_wall_time = false);

}  // namespace qmatch
