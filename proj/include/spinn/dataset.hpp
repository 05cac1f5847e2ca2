#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cstdint>
#include <string>
#include <vector>

#include "spinn/csv.hpp"
#include "spinn/json_util.hpp"
#include "spinn/netmodel.hpp"
#include "spinn/rng.hpp"
#include "spinn/simulator.hpp"

namespace spinn {

// Configuration of the data generator: how many operating conditions to draw
// (seen OCs contribute labeled data; unseen OCs contribute collocation points
// only, and serve as the test population), the Gaussian load distribution,
// and the sampling windows.
struct SamplerConfig {
  int n_seen = 70;
  int n_unseen = 30;
  std::vector<Complex> load_means;   // per load bus, P + jQ
  std::vector<double> load_stds;     // per load bus, applied to both P and Q
  int n_labeled = 4200;              // total labeled samples over seen OCs
  int n_collocation = 200;           // total collocation points over all OCs
  double t_interp = 2.0;             // labeled times drawn from [0, t_interp]
  double t_extrap = 4.0;             // collocation times drawn from [0, t_extrap]
  std::uint64_t seed = 0;
  int retry_budget = 100;            // power-flow rejection retries per OC

  void validate(const NetworkCase& net) const {
    if (n_seen < 0 || n_unseen < 0) throw Error("SamplerConfig: negative OC counts");
    if (static_cast<int>(load_means.size()) != net.n_loads() ||
        static_cast<int>(load_stds.size()) != net.n_loads())
      throw Error("SamplerConfig: load distribution size must match the case's load buses");
    for (double s : load_stds)
      if (s < 0) throw Error("SamplerConfig: negative load std");
    if (n_labeled < 0 || n_collocation < 0) throw Error("SamplerConfig: negative sample counts");
    if (n_labeled > 0 && n_seen == 0) throw Error("SamplerConfig: labeled samples need seen OCs");
    if (t_interp <= 0 || t_extrap <= 0) throw Error("SamplerConfig: time windows must be positive");
    if (retry_budget < 1) throw Error("SamplerConfig: retry budget must be at least 1");
  }
};

struct TaggedOc {
  OperatingCondition oc;
  bool seen = true;
};

struct LabeledSample {
  int oc_id = 0;
  double t = 0.0;
  Eigen::VectorXd x;  // [delta; omega], physical units
};

struct CollocationPoint {
  int oc_id = 0;
  double t = 0.0;
};

// Standardisation statistics.  Inputs are the features [s, t] (loads in
// (P, Q) pairs per load bus, then time); targets are the 2n state components.
// Stored samples stay in raw physical units; these statistics are applied at
// training/evaluation time.
struct FeatureNorm {
  Eigen::VectorXd in_mean, in_std;      // n_features = 2 * n_loads + 1
  Eigen::VectorXd x_mean, x_std;        // 2 * n_machines
  std::vector<int> in_clamped;          // indices whose std was clamped to 1
  std::vector<int> x_clamped;

  int n_features() const { return static_cast<int>(in_mean.size()); }
};

struct Dataset {
  SamplerConfig cfg;
  std::vector<TaggedOc> ocs;  // ids dense 0..(n_seen+n_unseen)-1, seen first
  std::vector<LabeledSample> labeled;
  std::vector<CollocationPoint> collocation;
  std::vector<int> train_idx, val_idx;  // indices into `labeled`
  FeatureNorm norm;
  int n_machines = 0;

  const OperatingCondition& oc_by_id(int id) const {
    if (id < 0 || id >= static_cast<int>(ocs.size()))
      throw Error("Dataset: unknown oc id " + std::to_string(id));
    return ocs[static_cast<std::size_t>(id)].oc;
  }

  // Raw input feature vector [s, t] for a (oc, t) pair.
  Eigen::VectorXd features(int oc_id, double t) const {
    const auto& loads = oc_by_id(oc_id).loads;
    Eigen::VectorXd f(2 * static_cast<int>(loads.size()) + 1);
    for (std::size_t i = 0; i < loads.size(); ++i) {
      f(2 * static_cast<Eigen::Index>(i)) = loads[i].real();
      f(2 * static_cast<Eigen::Index>(i) + 1) = loads[i].imag();
    }
    f(f.size() - 1) = t;
    return f;
  }
};

// Draw seen + unseen operating conditions with per-OC random streams and
// power-flow rejection.  Throws if an OC exhausts its retry budget, reporting
// the overall acceptance rate.
//
// Stream choice: seen OC i uses stream index i, unseen OC j uses stream index
// 2^31 + j.  Under a fixed seed this makes the seen pool a stable prefix when
// n_seen grows and keeps the unseen (test) pool identical regardless of
// n_seen, so results across runs that vary only the OC counts are comparable.
inline std::vector<TaggedOc> sample_operating_conditions(const NetworkCase& net,
                                                         const SamplerConfig& cfg) {
  net.validate();
  cfg.validate(net);
  std::vector<TaggedOc> out;
  const int total = cfg.n_seen + cfg.n_unseen;
  out.reserve(static_cast<std::size_t>(total));
  long attempts = 0, accepted = 0;
  for (int i = 0; i < total; ++i) {
    const std::uint64_t stream_index =
        i < cfg.n_seen ? static_cast<std::uint64_t>(i)
                       : 0x80000000ULL + static_cast<std::uint64_t>(i - cfg.n_seen);
    RandomStream rs(cfg.seed, stream::kind(stream::kOcLoads, stream_index));
    bool ok = false;
    OperatingCondition oc;
    oc.id = i;
    for (int attempt = 0; attempt < cfg.retry_budget && !ok; ++attempt) {
      ++attempts;
      oc.loads.clear();
      for (std::size_t b = 0; b < cfg.load_means.size(); ++b) {
        const double p = rs.normal(cfg.load_means[b].real(), cfg.load_stds[b]);
        const double q = rs.normal(cfg.load_means[b].imag(), cfg.load_stds[b]);
        oc.loads.emplace_back(p, q);
      }
      try {
        (void)solve_power_flow(net, oc);
        ok = true;
        ++accepted;
      } catch (const PowerFlowDiverged&) {
        // rejected draw; redraw from the same stream
      }
    }
    if (!ok)
      throw Error("sample_operating_conditions: retry budget exhausted for OC " +
                  std::to_string(i) + " (acceptance rate " + std::to_string(accepted) + "/" +
                  std::to_string(attempts) + ")");
    out.push_back({oc, i < cfg.n_seen});
  }
  return out;
}

// Even allocation of `total` items over `parts` bins; the remainder goes to
// the lowest-indexed bins.
inline std::vector<int> even_allocation(int total, int parts) {
  if (parts <= 0) return {};
  std::vector<int> alloc(static_cast<std::size_t>(parts), total / parts);
  for (int i = 0; i < total % parts; ++i) ++alloc[static_cast<std::size_t>(i)];
  return alloc;
}

struct LabeledBuildResult {
  std::vector<LabeledSample> samples;
  std::vector<int> excluded_ocs;  // OCs whose simulation failed
};

// Simulate each seen OC and read labeled states from the dense output at
// uniformly random times in [0, t_interp].
inline LabeledBuildResult build_labeled_set(const NetworkCase& net,
                                            const std::vector<TaggedOc>& ocs,
                                            const FaultSchedule& fs, const SimConfig& sim,
                                            const SamplerConfig& cfg) {
  fs.validate();
  if (cfg.t_interp > fs.t_end)
    throw Error("build_labeled_set: t_interp exceeds the simulation horizon");
  std::vector<const TaggedOc*> seen;
  for (const auto& toc : ocs)
    if (toc.seen) seen.push_back(&toc);
  const std::vector<int> alloc = even_allocation(cfg.n_labeled, static_cast<int>(seen.size()));

  LabeledBuildResult res;
  res.samples.reserve(static_cast<std::size_t>(cfg.n_labeled));
  for (std::size_t s = 0; s < seen.size(); ++s) {
    const int count = alloc.empty() ? 0 : alloc[s];
    if (count == 0) continue;
    const OperatingCondition& oc = seen[s]->oc;
    RandomStream rs(cfg.seed,
                    stream::kind(stream::kLabeledTimes, static_cast<std::uint64_t>(oc.id)));
    std::vector<double> ts(static_cast<std::size_t>(count));
    for (auto& t : ts) t = rs.uniform(0.0, cfg.t_interp);
    std::sort(ts.begin(), ts.end());
    try {
      const Trajectory tr = simulate_fault_case_at(net, oc, fs, sim, ts, false);
      for (std::size_t i = 0; i < ts.size(); ++i)
        res.samples.push_back({oc.id, ts[i], tr.states.row(static_cast<Eigen::Index>(i))});
    } catch (const Error&) {
      res.excluded_ocs.push_back(oc.id);
    }
  }
  return res;
}

// Collocation points: input locations only, no simulation.  Allocated evenly
// over all OCs (seen and unseen), times uniform in [0, t_extrap].
inline std::vector<CollocationPoint> build_collocation_set(const std::vector<TaggedOc>& ocs,
                                                           const SamplerConfig& cfg) {
  const std::vector<int> alloc = even_allocation(cfg.n_collocation, static_cast<int>(ocs.size()));
  std::vector<CollocationPoint> pts;
  pts.reserve(static_cast<std::size_t>(cfg.n_collocation));
  for (std::size_t s = 0; s < ocs.size(); ++s) {
    const int count = alloc.empty() ? 0 : alloc[s];
    RandomStream rs(cfg.seed,
                    stream::kind(stream::kCollocation, static_cast<std::uint64_t>(ocs[s].oc.id)));
    for (int i = 0; i < count; ++i) pts.push_back({ocs[s].oc.id, rs.uniform(0.0, cfg.t_extrap)});
  }
  return pts;
}

// Stratified 90/10 train/validation split: within each OC's samples, a seeded
// shuffle sends floor(n/10) samples to validation.
inline void make_split(Dataset& ds) {
  ds.train_idx.clear();
  ds.val_idx.clear();
  std::vector<std::vector<int>> by_oc(ds.ocs.size());
  for (std::size_t i = 0; i < ds.labeled.size(); ++i)
    by_oc[static_cast<std::size_t>(ds.labeled[i].oc_id)].push_back(static_cast<int>(i));
  for (std::size_t o = 0; o < by_oc.size(); ++o) {
    auto& idx = by_oc[o];
    if (idx.empty()) continue;
    RandomStream rs(ds.cfg.seed, stream::kind(stream::kSplit, static_cast<std::uint64_t>(o)));
    shuffle(idx, rs);
    const std::size_t n_val = idx.size() / 10;
    for (std::size_t i = 0; i < idx.size(); ++i)
      (i < n_val ? ds.val_idx : ds.train_idx).push_back(idx[i]);
  }
  std::sort(ds.train_idx.begin(), ds.train_idx.end());
  std::sort(ds.val_idx.begin(), ds.val_idx.end());
}

// Compute standardisation statistics from the training split (population
// moments).  Zero-variance features keep std 1 and are flagged.
inline FeatureNorm normalize_features(const Dataset& ds) {
  if (ds.train_idx.empty()) throw Error("normalize_features: empty training split");
  const Eigen::Index nf = ds.features(ds.labeled[0].oc_id, 0.0).size();
  const Eigen::Index nx = ds.labeled[0].x.size();
  FeatureNorm norm;
  norm.in_mean = Eigen::VectorXd::Zero(nf);
  norm.in_std = Eigen::VectorXd::Zero(nf);
  norm.x_mean = Eigen::VectorXd::Zero(nx);
  norm.x_std = Eigen::VectorXd::Zero(nx);

  const double count = static_cast<double>(ds.train_idx.size());
  for (int i : ds.train_idx) {
    const auto& s = ds.labeled[static_cast<std::size_t>(i)];
    norm.in_mean += ds.features(s.oc_id, s.t);
    norm.x_mean += s.x;
  }
  norm.in_mean /= count;
  norm.x_mean /= count;
  for (int i : ds.train_idx) {
    const auto& s = ds.labeled[static_cast<std::size_t>(i)];
    norm.in_std += (ds.features(s.oc_id, s.t) - norm.in_mean).cwiseAbs2();
    norm.x_std += (s.x - norm.x_mean).cwiseAbs2();
  }
  norm.in_std = (norm.in_std / count).cwiseSqrt();
  norm.x_std = (norm.x_std / count).cwiseSqrt();
  for (Eigen::Index i = 0; i < nf; ++i)
    if (norm.in_std(i) < 1e-12) {
      norm.in_std(i) = 1.0;
      norm.in_clamped.push_back(static_cast<int>(i));
    }
  for (Eigen::Index i = 0; i < nx; ++i)
    if (norm.x_std(i) < 1e-12) {
      norm.x_std(i) = 1.0;
      norm.x_clamped.push_back(static_cast<int>(i));
    }
  return norm;
}

// Full generation pipeline.
inline Dataset build_dataset(const NetworkCase& net, const FaultSchedule& fs, const SimConfig& sim,
                             const SamplerConfig& cfg, std::vector<int>* excluded = nullptr) {
  Dataset ds;
  ds.cfg = cfg;
  ds.n_machines = net.n_generators();
  ds.ocs = sample_operating_conditions(net, cfg);
  LabeledBuildResult lb = build_labeled_set(net, ds.ocs, fs, sim, cfg);
  ds.labeled = std::move(lb.samples);
  if (excluded) *excluded = lb.excluded_ocs;
  ds.collocation = build_collocation_set(ds.ocs, cfg);
  make_split(ds);
  if (!ds.train_idx.empty()) ds.norm = normalize_features(ds);
  return ds;
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

inline constexpr int kDatasetSchemaVersion = 1;

inline json sampler_config_to_json(const SamplerConfig& cfg) {
  json j;
  j["n_seen"] = cfg.n_seen;
  j["n_unseen"] = cfg.n_unseen;
  j["load_means"] = json::array();
  for (auto z : cfg.load_means) j["load_means"].push_back(to_json(z));
  j["load_stds"] = cfg.load_stds;
  j["n_labeled"] = cfg.n_labeled;
  j["n_collocation"] = cfg.n_collocation;
  j["t_interp"] = cfg.t_interp;
  j["t_extrap"] = cfg.t_extrap;
  j["seed"] = cfg.seed;
  j["retry_budget"] = cfg.retry_budget;
  return j;
}

inline SamplerConfig sampler_config_from_json(const json& j) {
  require_keys(j,
               {"n_seen", "n_unseen", "load_means", "load_stds", "n_labeled", "n_collocation",
                "t_interp", "t_extrap", "seed", "retry_budget"},
               "sampler config");
  SamplerConfig cfg;
  if (j.contains("n_seen")) cfg.n_seen = j.at("n_seen").get<int>();
  if (j.contains("n_unseen")) cfg.n_unseen = j.at("n_unseen").get<int>();
  if (j.contains("load_means")) {
    cfg.load_means.clear();
    for (const auto& z : j.at("load_means"))
      cfg.load_means.push_back(complex_from_json(z, "load mean"));
  }
  if (j.contains("load_stds")) cfg.load_stds = j.at("load_stds").get<std::vector<double>>();
  if (j.contains("n_labeled")) cfg.n_labeled = j.at("n_labeled").get<int>();
  if (j.contains("n_collocation")) cfg.n_collocation = j.at("n_collocation").get<int>();
  if (j.contains("t_interp")) cfg.t_interp = j.at("t_interp").get<double>();
  if (j.contains("t_extrap")) cfg.t_extrap = j.at("t_extrap").get<double>();
  if (j.contains("seed")) cfg.seed = j.at("seed").get<std::uint64_t>();
  if (j.contains("retry_budget")) cfg.retry_budget = j.at("retry_budget").get<int>();
  return cfg;
}

inline json feature_norm_to_json(const FeatureNorm& n) {
  auto vec = [](const Eigen::VectorXd& v) {
    json a = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
    return a;
  };
  return json{{"in_mean", vec(n.in_mean)},   {"in_std", vec(n.in_std)},
              {"x_mean", vec(n.x_mean)},     {"x_std", vec(n.x_std)},
              {"in_clamped", n.in_clamped},  {"x_clamped", n.x_clamped}};
}

inline FeatureNorm feature_norm_from_json(const json& j) {
  require_keys(j, {"in_mean", "in_std", "x_mean", "x_std", "in_clamped", "x_clamped"},
               "normalization");
  auto vec = [](const json& a) {
    Eigen::VectorXd v(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) v(static_cast<Eigen::Index>(i)) = a[i].get<double>();
    return v;
  };
  FeatureNorm n;
  n.in_mean = vec(j.at("in_mean"));
  n.in_std = vec(j.at("in_std"));
  n.x_mean = vec(j.at("x_mean"));
  n.x_std = vec(j.at("x_std"));
  n.in_clamped = j.at("in_clamped").get<std::vector<int>>();
  n.x_clamped = j.at("x_clamped").get<std::vector<int>>();
  return n;
}

inline json dataset_to_json(const Dataset& ds) {
  json j;
  j["schema_version"] = kDatasetSchemaVersion;
  j["sampler_config"] = sampler_config_to_json(ds.cfg);
  j["n_machines"] = ds.n_machines;
  j["operating_conditions"] = json::array();
  for (const auto& toc : ds.ocs) {
    json jo{{"id", toc.oc.id}, {"seen", toc.seen}, {"loads", json::array()}};
    for (auto z : toc.oc.loads) jo["loads"].push_back(to_json(z));
    j["operating_conditions"].push_back(std::move(jo));
  }
  j["labeled"] = json::array();
  for (const auto& s : ds.labeled) {
    json row{{"oc_id", s.oc_id}, {"t", s.t}, {"x", json::array()}};
    for (Eigen::Index i = 0; i < s.x.size(); ++i) row["x"].push_back(s.x(i));
    j["labeled"].push_back(std::move(row));
  }
  j["collocation"] = json::array();
  for (const auto& p : ds.collocation)
    j["collocation"].push_back(json{{"oc_id", p.oc_id}, {"t", p.t}});
  j["train_idx"] = ds.train_idx;
  j["val_idx"] = ds.val_idx;
  j["normalization"] = feature_norm_to_json(ds.norm);
  return j;
}

inline Dataset dataset_from_json(const json& j) {
  check_schema_version(j, kDatasetSchemaVersion, "dataset");
  require_keys(j,
               {"schema_version", "sampler_config", "n_machines", "operating_conditions",
                "labeled", "collocation", "train_idx", "val_idx", "normalization"},
               "dataset");
  Dataset ds;
  ds.cfg = sampler_config_from_json(j.at("sampler_config"));
  ds.n_machines = j.at("n_machines").get<int>();
  for (const auto& jo : j.at("operating_conditions")) {
    require_keys(jo, {"id", "seen", "loads"}, "dataset OC");
    TaggedOc toc;
    toc.oc.id = jo.at("id").get<int>();
    toc.seen = jo.at("seen").get<bool>();
    for (const auto& z : jo.at("loads")) toc.oc.loads.push_back(complex_from_json(z, "OC load"));
    ds.ocs.push_back(std::move(toc));
  }
  for (const auto& row : j.at("labeled")) {
    require_keys(row, {"oc_id", "t", "x"}, "labeled sample");
    LabeledSample s;
    s.oc_id = row.at("oc_id").get<int>();
    s.t = row.at("t").get<double>();
    const auto& xs = row.at("x");
    s.x.resize(static_cast<Eigen::Index>(xs.size()));
    for (std::size_t i = 0; i < xs.size(); ++i)
      s.x(static_cast<Eigen::Index>(i)) = xs[i].get<double>();
    ds.labeled.push_back(std::move(s));
  }
  for (const auto& row : j.at("collocation")) {
    require_keys(row, {"oc_id", "t"}, "collocation point");
    ds.collocation.push_back({row.at("oc_id").get<int>(), row.at("t").get<double>()});
  }
  ds.train_idx = j.at("train_idx").get<std::vector<int>>();
  ds.val_idx = j.at("val_idx").get<std::vector<int>>();
  ds.norm = feature_norm_from_json(j.at("normalization"));
  return ds;
}

inline void save_dataset(const std::string& path, const Dataset& ds) {
  save_json_file(path, dataset_to_json(ds));
}

inline Dataset load_dataset(const std::string& path) {
  return dataset_from_json(load_json_file(path));
}

// CSV exports for inspection.
inline void write_dataset_csv(const std::string& labeled_path, const std::string& colloc_path,
                              const Dataset& ds) {
  const int nl = ds.ocs.empty() ? 0 : static_cast<int>(ds.ocs[0].oc.loads.size());
  std::vector<std::string> header{"oc_id"};
  for (int i = 1; i <= nl; ++i) {
    header.push_back("p_load_" + std::to_string(i));
    header.push_back("q_load_" + std::to_string(i));
  }
  header.push_back("t");
  for (int k = 1; k <= ds.n_machines; ++k) header.push_back("delta_" + std::to_string(k));
  for (int k = 1; k <= ds.n_machines; ++k) header.push_back("omega_" + std::to_string(k));
  CsvWriter lw(labeled_path, header);
  for (const auto& s : ds.labeled) {
    std::vector<CsvWriter::Cell> cells{static_cast<std::int64_t>(s.oc_id)};
    for (auto z : ds.oc_by_id(s.oc_id).loads) {
      cells.emplace_back(z.real());
      cells.emplace_back(z.imag());
    }
    cells.emplace_back(s.t);
    for (Eigen::Index i = 0; i < s.x.size(); ++i) cells.emplace_back(s.x(i));
    lw.row(cells);
  }

  std::vector<std::string> cheader{"oc_id"};
  for (int i = 1; i <= nl; ++i) {
    cheader.push_back("p_load_" + std::to_string(i));
    cheader.push_back("q_load_" + std::to_string(i));
  }
  cheader.push_back("t");
  CsvWriter cw(colloc_path, cheader);
  for (const auto& p : ds.collocation) {
    std::vector<CsvWriter::Cell> cells{static_cast<std::int64_t>(p.oc_id)};
    for (auto z : ds.oc_by_id(p.oc_id).loads) {
      cells.emplace_back(z.real());
      cells.emplace_back(z.imag());
    }
    cells.emplace_back(p.t);
    cw.row(cells);
  }
}

}  // namespace spinn
