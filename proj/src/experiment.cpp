#include "qmatch/experiment.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <map>
#include <numbers>
#include <set>
#include <sstream>

#include "json.hpp"
#include "qmatch/datasets.hpp"
#include "qmatch/kernels.hpp"

namespace qmatch {

namespace pt = boost::property_tree;
using nlohmann::json;

namespace {

const std::map<std::string, std::set<std::string>>& known_keys() {
  static const std::map<std::string, std::set<std::string>> keys = {
      {"experiment", {"name", "mse_plateau_ratio"}},
      {"dataset", {"kind", "seed", "radius", "counts", "n", "noise"}},
      {"corruption", {"kinds", "matrix", "offset", "rotation_deg", "shift", "noise_sigma", "seed"}},
      {"adapter", {"kind", "hidden", "init", "init_rotation_deg", "seed"}},
      {"feature_map", {"kind", "out_dim", "hidden", "seed"}},
      {"train",
       {"epochs", "batch_size", "learning_rate", "momentum", "reference_count", "reg_weight", "seed",
        "snapshot_every", "snapshot_every_steps", "full_batch", "wasserstein_every"}},
      {"output", {"dir", "record_wall_time"}},
  };
  return keys;
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto b = item.find_first_not_of(" \t");
    const auto e = item.find_last_not_of(" \t");
    if (b != std::string::npos) out.push_back(item.substr(b, e - b + 1));
  }
  return out;
}

class Section {
 public:
  Section(const pt::ptree* tree, std::string name) : tree_(tree), name_(std::move(name)) {}

  template <typename T>
  T get(const std::string& key, T fallback) const {
    if (!tree_) return fallback;
    const auto v = tree_->get_optional<std::string>(pt::ptree::path_type(key, '\0'));
    if (!v) return fallback;
    try {
      if constexpr (std::is_same_v<T, bool>) {
        if (*v == "true" || *v == "1" || *v == "yes") return true;
        if (*v == "false" || *v == "0" || *v == "no") return false;
        throw std::invalid_argument("bool");
      } else if constexpr (std::is_same_v<T, std::string>) {
        return *v;
      } else if constexpr (std::is_floating_point_v<T>) {
        std::size_t pos = 0;
        const double d = std::stod(*v, &pos);
        if (pos != v->size()) throw std::invalid_argument("trailing");
        return d;
      } else {
        if (!v->empty() && v->front() == '-') throw std::invalid_argument("negative");
        std::size_t pos = 0;
        const auto d = std::stoull(*v, &pos);
        if (pos != v->size()) throw std::invalid_argument("trailing");
        return static_cast<T>(d);
      }
    } catch (const std::exception&) {
      throw ConfigError("invalid value for [" + name_ + "] " + key + ": '" + *v + "'");
    }
  }

  std::vector<double> get_doubles(const std::string& key) const {
    std::vector<double> out;
    for (const auto& s : split_list(get<std::string>(key, ""))) {
      try {
        out.push_back(std::stod(s));
      } catch (const std::exception&) {
        throw ConfigError("invalid number in [" + name_ + "] " + key + ": '" + s + "'");
      }
    }
    return out;
  }

  std::vector<std::size_t> get_counts(const std::string& key) const {
    std::vector<std::size_t> out;
    for (double v : get_doubles(key)) {
      if (v < 0 || v != std::floor(v)) throw ConfigError("[" + name_ + "] " + key + " must hold non-negative integers");
      out.push_back(static_cast<std::size_t>(v));
    }
    return out;
  }

 private:
  const pt::ptree* tree_;
  std::string name_;
};

ExperimentSpec spec_from_tree(const pt::ptree& tree) {
  for (const auto& [section, body] : tree) {
    const auto it = known_keys().find(section);
    if (!body.data().empty()) throw ConfigError("key outside any section: " + section);
    if (it == known_keys().end()) throw ConfigError("unknown section [" + section + "]");
    for (const auto& [key, value] : body) {
      if (!it->second.contains(key)) throw ConfigError("unknown key [" + section + "] " + key);
    }
  }
  auto section = [&](const std::string& name) {
    const auto child = tree.get_child_optional(name);
    return Section(child ? &*child : nullptr, name);
  };

  ExperimentSpec s;
  const auto ex = section("experiment");
  s.name = ex.get<std::string>("name", s.name);
  s.mse_plateau_ratio = ex.get("mse_plateau_ratio", s.mse_plateau_ratio);

  const auto ds = section("dataset");
  s.dataset.kind = ds.get<std::string>("kind", s.dataset.kind);
  s.dataset.seed = ds.get<std::uint64_t>("seed", s.dataset.seed);
  s.dataset.radius = ds.get("radius", s.dataset.radius);
  s.dataset.counts = ds.get_counts("counts");
  s.dataset.n = ds.get<std::size_t>("n", s.dataset.n);
  s.dataset.noise = ds.get("noise", s.dataset.noise);

  const auto co = section("corruption");
  s.corruption.kinds = split_list(co.get<std::string>("kinds", ""));
  s.corruption.matrix = co.get_doubles("matrix");
  s.corruption.offset = co.get_doubles("offset");
  s.corruption.rotation_deg = co.get("rotation_deg", s.corruption.rotation_deg);
  s.corruption.shift = co.get_doubles("shift");
  s.corruption.noise_sigma = co.get("noise_sigma", s.corruption.noise_sigma);
  s.corruption.seed = co.get<std::uint64_t>("seed", s.corruption.seed);

  const auto ad = section("adapter");
  s.adapter.kind = ad.get<std::string>("kind", s.adapter.kind);
  s.adapter.hidden = ad.get<std::size_t>("hidden", s.adapter.hidden);
  s.adapter.init = ad.get<std::string>("init", s.adapter.init);
  s.adapter.init_rotation_deg = ad.get("init_rotation_deg", s.adapter.init_rotation_deg);
  s.adapter.seed = ad.get<std::uint64_t>("seed", s.adapter.seed);

  const auto fm = section("feature_map");
  s.feature_map.kind = fm.get<std::string>("kind", s.feature_map.kind);
  s.feature_map.out_dim = fm.get<std::size_t>("out_dim", s.feature_map.out_dim);
  s.feature_map.hidden = fm.get<std::size_t>("hidden", s.feature_map.hidden);
  s.feature_map.seed = fm.get<std::uint64_t>("seed", s.feature_map.seed);

  const auto tr = section("train");
  TrainConfig& t = s.train;
  t.epochs = tr.get<std::size_t>("epochs", t.epochs);
  t.batch_size = tr.get<std::size_t>("batch_size", t.batch_size);
  t.learning_rate = tr.get("learning_rate", t.learning_rate);
  t.momentum = tr.get("momentum", t.momentum);
  t.reference_count = tr.get<std::size_t>("reference_count", t.reference_count);
  t.reg_weight = tr.get("reg_weight", t.reg_weight);
  t.seed = tr.get<std::uint64_t>("seed", t.seed);
  t.snapshot_every = tr.get<std::size_t>("snapshot_every", t.snapshot_every);
  t.snapshot_every_steps = tr.get<std::size_t>("snapshot_every_steps", t.snapshot_every_steps);
  t.full_batch = tr.get("full_batch", t.full_batch);
  t.wasserstein_every = tr.get<std::size_t>("wasserstein_every", t.wasserstein_every);

  const auto out = section("output");
  s.output_dir = out.get<std::string>("dir", s.output_dir.string());
  s.record_wall_time = out.get("record_wall_time", s.record_wall_time);
  t.record_wall_time = s.record_wall_time;
  return s;
}

json spec_to_json(const ExperimentSpec& s) {
  const TrainConfig& t = s.train;
  return json{
      {"experiment", {{"name", s.name}, {"mse_plateau_ratio", s.mse_plateau_ratio}}},
      {"dataset",
       {{"kind", s.dataset.kind}, {"seed", s.dataset.seed}, {"radius", s.dataset.radius},
        {"counts", s.dataset.counts}, {"n", s.dataset.n}, {"noise", s.dataset.noise}}},
      {"corruption",
       {{"kinds", s.corruption.kinds}, {"matrix", s.corruption.matrix}, {"offset", s.corruption.offset},
        {"rotation_deg", s.corruption.rotation_deg}, {"shift", s.corruption.shift},
        {"noise_sigma", s.corruption.noise_sigma}, {"seed", s.corruption.seed}}},
      {"adapter",
       {{"kind", s.adapter.kind}, {"hidden", s.adapter.hidden}, {"init", s.adapter.init},
        {"init_rotation_deg", s.adapter.init_rotation_deg}, {"seed", s.adapter.seed}}},
      {"feature_map",
       {{"kind", s.feature_map.kind}, {"out_dim", s.feature_map.out_dim},
        {"hidden", s.feature_map.hidden}, {"seed", s.feature_map.seed}}},
      {"train",
       {{"epochs", t.epochs}, {"batch_size", t.batch_size}, {"learning_rate", t.learning_rate},
        {"momentum", t.momentum}, {"reference_count", t.reference_count}, {"reg_weight", t.reg_weight},
        {"seed", t.seed}, {"snapshot_every", t.snapshot_every},
        {"snapshot_every_steps", t.snapshot_every_steps}, {"full_batch", t.full_batch},
        {"wasserstein_every", t.wasserstein_every}}},
      {"output", {{"dir", s.output_dir.string()}, {"record_wall_time", s.record_wall_time}}},
  };
}

LabeledCloud build_clean(const DatasetSpec& d) {
  if (d.kind == "six_blobs") {
    auto blobs = default_six_blobs(d.radius);
    if (!d.counts.empty()) {
      if (d.counts.size() != blobs.size()) throw ConfigError("[dataset] counts needs 6 entries");
      for (std::size_t c = 0; c < blobs.size(); ++c) blobs[c].count = d.counts[c];
    }
    return six_blobs(d.seed, blobs);
  }
  if (d.kind == "two_moons") return two_moons(d.seed, d.n, d.noise);
  throw ConfigError("unknown dataset kind '" + d.kind + "'");
}

LabeledCloud build_corrupted(const LabeledCloud& clean, const CorruptionSpec& c) {
  LabeledCloud cur = clean;
  std::uint64_t step = 0;
  for (const auto& name : c.kinds) {
    Corruption op;
    switch (parse_corruption_kind(name)) {
      case CorruptionKind::linear: op = Corruption::linear(c.matrix, c.offset); break;
      case CorruptionKind::rotation: op = Corruption::rotation(c.rotation_deg * std::numbers::pi / 180.0); break;
      case CorruptionKind::shift: op = Corruption::shift(c.shift); break;
      case CorruptionKind::gaussian_noise: op = Corruption::gaussian_noise(c.noise_sigma); break;
    }
    cur = apply_corruption(cur, op, c.seed + step++);
  }
  return cur;
}

Adapter build_adapter(const AdapterSpec& a, std::size_t d) {
  const AdapterKind kind = parse_adapter_kind(a.kind);
  if (a.init != "identity" && a.init != "rotation") throw ConfigError("[adapter] init must be identity or rotation");
  if (a.init == "rotation" && (kind != AdapterKind::affine || d != 2))
    throw ConfigError("[adapter] rotation init needs a 2-D affine adapter");
  switch (kind) {
    case AdapterKind::identity: return Adapter::identity(d);
    case AdapterKind::mlp1: return Adapter::mlp1(d, a.hidden, a.seed);
    case AdapterKind::affine:
      if (a.init == "rotation") {
        const double r = a.init_rotation_deg * std::numbers::pi / 180.0;
        const std::vector<double> m = {std::cos(r), -std::sin(r), std::sin(r), std::cos(r)};
        const std::vector<double> b = {0.0, 0.0};
        return Adapter::affine(2, m, b);
      }
      return Adapter::affine(d);
  }
  throw ConfigError("unknown adapter kind");
}

FeatureMap build_feature_map(const FeatureMapSpec& f, std::size_t d) {
  const std::size_t k = f.out_dim == 0 ? d : f.out_dim;
  switch (parse_feature_kind(f.kind)) {
    case FeatureKind::identity:
      if (k != d) throw ConfigError("[feature_map] identity keeps the input dimension");
      return FeatureMap::identity(d);
    case FeatureKind::fixed_affine: return FeatureMap::random_affine(d, k, f.seed);
    case FeatureKind::fixed_mlp: return FeatureMap::random_mlp(d, f.hidden, k, f.seed);
  }
  throw ConfigError("unknown feature map kind");
}

void write_csv(const std::filesystem::path& path, const LabeledCloud& cloud) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  write_cloud_csv(out, cloud);
}

json metrics_json(const EpochRecord& r) {
  json j;
  j["quantile_loss"] = r.quantile_loss;
  j["paired_mse"] = r.paired_mse ? json(*r.paired_mse) : json(nullptr);
  j["wasserstein2"] = r.wasserstein2 ? json(*r.wasserstein2) : json(nullptr);
  return j;
}

std::string utc_timestamp() {
  const std::time_t now = std::time(nullptr);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
  return buf;
}

}  // namespace

ExperimentSpec parse_experiment_spec(const std::string& text) {
  pt::ptree tree;
  std::istringstream in(text);
  try {
    pt::ini_parser::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(std::string("config parse error: ") + e.what());
  }
  return spec_from_tree(tree);
}

ExperimentSpec load_experiment_spec(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_experiment_spec(ss.str());
}

ExperimentOutcome run_experiment(const ExperimentSpec& spec) {
  const auto started = std::chrono::steady_clock::now();

  // Bad kinds, sizes or singular maps in the config are configuration errors.
  auto as_config_error = [](auto&& build) {
    try {
      return build();
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    } catch (const DegenerateInput& e) {
      throw ConfigError(e.what());
    }
  };
  const LabeledCloud clean = as_config_error([&] { return build_clean(spec.dataset); });
  const LabeledCloud corrupted = as_config_error([&] { return build_corrupted(clean, spec.corruption); });
  const std::size_t d = clean.cloud.dim();
  Adapter adapter = as_config_error([&] { return build_adapter(spec.adapter, d); });
  const FeatureMap fmap = as_config_error([&] { return build_feature_map(spec.feature_map, d); });

  const PointCloud source(fmap.forward(clean.cloud));
  TrainInputs inputs{source, std::span<const int>(clean.labels), corrupted.cloud,
                     oracles::Pairing::identity(corrupted.size())};

  std::error_code ec;
  std::filesystem::create_directories(spec.output_dir, ec);
  if (ec) throw ConfigError("cannot create output directory " + spec.output_dir.string());

  ExperimentOutcome outcome{train(inputs, std::move(adapter), fmap, spec.train), 0.0, false, {}, {}};
  const RunTrace& trace = outcome.result.trace;

  std::vector<double> ql, mse;
  for (const auto& r : trace.epochs) {
    if (!r.paired_mse) continue;
    ql.push_back(r.quantile_loss);
    mse.push_back(*r.paired_mse);
  }
  if (ql.size() >= 2) outcome.pearson_qloss_mse = pearson_correlation(ql, mse);
  const auto& init = trace.initial;
  const auto& fin = trace.final_record();
  if (init.paired_mse && fin.paired_mse)
    outcome.mse_plateau = *fin.paired_mse > spec.mse_plateau_ratio * *init.paired_mse;

  outcome.trace_path = spec.output_dir / "trace.csv";
  {
    std::ofstream out(outcome.trace_path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + outcome.trace_path.string());
    write_trace_csv(out, trace, spec.record_wall_time);
  }
  write_csv(spec.output_dir / "clean.csv", clean);
  write_csv(spec.output_dir / "corrupted.csv", corrupted);
  LabeledCloud adapted{outcome.result.adapter.forward(corrupted.cloud), clean.labels, std::nullopt};
  write_csv(spec.output_dir / "adapted.csv", adapted);

  const double runtime_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - started).count();
  json summary;
  summary["config"] = spec_to_json(spec);
  summary["initial_metrics"] = metrics_json(init);
  summary["final_metrics"] = metrics_json(fin);
  const auto params = outcome.result.adapter.params();
  summary["adapter_params"] = std::vector<double>(params.begin(), params.end());
  summary["flags"] = {{"mse_plateau", outcome.mse_plateau}};
  summary["trace_flags"] = trace.flags;
  summary["pearson_quantile_loss_paired_mse"] = outcome.pearson_qloss_mse;
  summary["epochs_recorded"] = trace.epochs.size();
  summary["kernel_isa"] = std::string(kernels::isa_name(kernels::active().isa));
  summary["runtime_ms"] = runtime_ms;
  summary["finished_at"] = utc_timestamp();
  if (corrupted.inverse) {
    summary["corruption_inverse"] = {{"matrix", corrupted.inverse->matrix},
                                     {"offset", corrupted.inverse->offset}};
  }

  outcome.summary_path = spec.output_dir / "summary.json";
  std::ofstream out(outcome.summary_path);
  if (!out) throw std::runtime_error("cannot write " + outcome.summary_path.string());
  out << summary.dump(2) << '\n';
  return outcome;
}

}  // namespace qmatch
