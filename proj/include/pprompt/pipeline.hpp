#pragma once

#include <chrono>
#include <ctime>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "pprompt/config.hpp"
#include "pprompt/diagnostics.hpp"

namespace pprompt {

// splitmix64 finalizer; decorrelates the per-purpose streams of one seed.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t salt) {
  std::uint64_t z = base + 0x9e3779b97f4a7c15ULL * (salt + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Points every random stream of `c` at streams derived from one replicate seed.
inline RunConfig with_seed(RunConfig c, std::uint64_t seed) {
  c.world.seed = derive_seed(seed, 1);
  c.encoder.seed = derive_seed(seed, 2);
  c.sampler.seed = derive_seed(seed, 3);
  c.diagnostics.seed = derive_seed(seed, 4);
  return c;
}

inline FrozenEncoders make_encoders(const RunConfig& c) {
  if (c.encoder.alignment == 0.0)
    return FrozenEncoders(c.encoder.context_dim, c.world.feature_dim, c.world.num_classes, c.encoder.seed);
  return FrozenEncoders(c.encoder.context_dim, c.world.feature_dim, c.world.num_classes, c.encoder.seed,
                        class_prototypes(c.world), c.encoder.alignment);
}

inline ContextEnsemble initial_ensemble(const RunConfig& c) {
  return ContextEnsemble::initialize(c.sampler.num_particles, c.encoder.context_dim,
                                     derive_seed(c.sampler.seed, 0x1417));
}

// φ is only consulted when the prior is on; the MLE arms keep a zero map.
inline PriorTrainResult prior_stage(const RunConfig& c, const FrozenEncoders& enc,
                                    const FewShotTask& task) {
  PriorNet net = PriorNet::zeros(enc.context_dim(), enc.feature_dim());
  if (!c.prior.enabled) return {std::move(net), {}};
  PriorTrainConfig tcfg = c.prior_train;
  tcfg.steps = c.resolved_prior_steps();
  return train_prior(enc, c.likelihood, std::move(net), task, tcfg);
}

inline SamplerResult sampler_stage(const RunConfig& c, const FrozenEncoders& enc,
                                   const FewShotTask& task, const PriorNet& net,
                                   ContextEnsemble start) {
  const Vector bar = c.prior.enabled ? compute_prior_mean_bar(net, task) : Vector();
  return run_sampler(enc, c.likelihood, c.prior, c.sampler, std::move(start), task, bar);
}

// Adaptation needs a trained φ, so it is switched off for prior-free runs.
inline AdaptConfig effective_adapt(const RunConfig& c, bool prior_trained) {
  AdaptConfig a = c.adapt;
  a.enabled = a.enabled && prior_trained;
  return a;
}

struct Metrics {
  EvalResult eval;
  std::vector<ClusterDiag> clusters;
  AdaptConfig adapt;
};

inline Metrics eval_stage(const RunConfig& c, const FrozenEncoders& enc, const PriorNet& net,
                          bool prior_trained, const ContextEnsemble& ensemble,
                          const FewShotTask& task) {
  Metrics m;
  m.adapt = effective_adapt(c, prior_trained);
  m.eval = evaluate_accuracy(enc, net, ensemble, task, c.likelihood, m.adapt);
  for (int k : c.diagnostics.ks) {
    if (task.test.size() < k) continue;
    m.clusters.push_back(prompt_cluster_variance(enc, net, ensemble, task, k, m.adapt, c.diagnostics.seed,
                                                 c.diagnostics.normalize, c.diagnostics.max_iter));
  }
  return m;
}

inline std::vector<double> alpha_curve(const RunConfig& c, const FrozenEncoders& enc,
                                       const PriorNet& net, const ContextEnsemble& ensemble,
                                       const FewShotTask& task, const std::vector<double>& alphas) {
  std::vector<double> out;
  out.reserve(alphas.size());
  for (double a : alphas)
    out.push_back(evaluate_accuracy(enc, net, ensemble, task, c.likelihood, AdaptConfig{a, true}).accuracy);
  return out;
}

struct PipelineResult {
  FewShotTask task;
  FrozenEncoders encoders;
  PriorTrainResult prior;
  SamplerResult sampler;
  Metrics metrics;
};

/// gen-data → train-prior → train → eval in one call.
inline PipelineResult run_pipeline(const RunConfig& c) {
  c.validate();
  FewShotTask task = generate_task(c.world);
  FrozenEncoders enc = make_encoders(c);
  PriorTrainResult prior = prior_stage(c, enc, task);
  SamplerResult sampled = sampler_stage(c, enc, task, prior.net, initial_ensemble(c));
  Metrics m = eval_stage(c, enc, prior.net, c.prior.enabled, sampled.ensemble, task);
  return {std::move(task), std::move(enc), std::move(prior), std::move(sampled), std::move(m)};
}

inline std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

inline Json metrics_to_json(const RunConfig& c, const Metrics& m, const std::string& timestamp) {
  Json per_class = Json::array();
  for (Index k = 0; k < m.eval.per_class.size(); ++k) {
    const double v = m.eval.per_class(k);
    per_class.push_back(std::isfinite(v) ? Json(v) : Json(nullptr));
  }
  Json clusters = Json::object();
  for (const auto& d : m.clusters)
    clusters[std::to_string(d.k)] = Json{{"counts", d.counts}, {"variance", d.variance}};
  return Json{{"accuracy", m.eval.accuracy},
              {"per_class_accuracy", per_class},
              {"num_test", m.eval.predictions.size()},
              {"adapt", {{"alpha", m.adapt.alpha}, {"enabled", m.adapt.enabled}}},
              {"cluster_variance", clusters},
              {"config", to_json(c)},
              {"timestamp", timestamp}};
}

// ---- ablation ------------------------------------------------------------

struct Arm {
  Method method = Method::svgd;
  bool prior = true;

  std::string name() const { return std::string(to_string(method)) + (prior ? "+prior" : ""); }
  bool operator==(const Arm&) const = default;
};

struct AblationCell {
  std::size_t arm = 0;
  int shot = 0;
  std::uint64_t seed = 0;
  bool ok = false;
  std::string error;
  double accuracy = 0.0;
  double cluster_variance = 0.0;  // at the last configured k
  std::vector<double> alpha_curve;  // empty for prior-free arms
};

struct AblationGrid {
  std::vector<Arm> arms = {{Method::sgd, false}, {Method::svgd, false}, {Method::sgd, true}, {Method::svgd, true}};
  std::vector<int> shots = {1, 2, 4, 8, 16};
  std::vector<std::uint64_t> seeds = {0, 1, 2};
  std::vector<AblationCell> cells;

  const AblationCell* find(std::size_t arm, int shot, std::uint64_t seed) const {
    for (const auto& c : cells)
      if (c.arm == arm && c.shot == shot && c.seed == seed) return &c;
    return nullptr;
  }
};

struct SummaryRow {
  std::string arm;
  int shot;
  double mean_acc;
  double std_acc;
  double mean_cluster_variance;
  int failed;
};

struct AlphaRow {
  std::string arm;
  int shot;
  double alpha;
  double mean_acc;
};

inline RunConfig cell_config(const RunConfig& base, const Arm& arm, int shot, std::uint64_t seed) {
  RunConfig c = with_seed(base, seed);
  c.world.shots_per_class = shot;
  c.sampler.method = arm.method;
  c.prior.enabled = arm.prior;
  return c;
}

/// Fills every (arm, shot, seed) cell. A failing cell is recorded with its
/// error and the sweep moves on.
inline void run_ablation(const RunConfig& base, AblationGrid& grid) {
  grid.cells.clear();
  for (std::size_t a = 0; a < grid.arms.size(); ++a) {
    for (int shot : grid.shots) {
      for (std::uint64_t seed : grid.seeds) {
        AblationCell cell{a, shot, seed};
        try {
          const RunConfig c = cell_config(base, grid.arms[a], shot, seed);
          const PipelineResult r = run_pipeline(c);
          cell.accuracy = r.metrics.eval.accuracy;
          cell.cluster_variance = r.metrics.clusters.empty() ? 0.0 : r.metrics.clusters.back().variance;
          if (grid.arms[a].prior)
            cell.alpha_curve = alpha_curve(c, r.encoders, r.prior.net, r.sampler.ensemble, r.task, c.alpha_sweep);
          cell.ok = true;
        } catch (const std::exception& e) {
          cell.error = e.what();
        }
        grid.cells.push_back(std::move(cell));
      }
    }
  }
}

namespace detail {

inline double sample_std(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  double s = 0.0;
  for (double x : v) s += (x - mean) * (x - mean);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

inline double mean_of(const std::vector<double>& v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

}  // namespace detail

inline std::vector<SummaryRow> summarize(const AblationGrid& grid) {
  std::vector<SummaryRow> rows;
  for (std::size_t a = 0; a < grid.arms.size(); ++a) {
    for (int shot : grid.shots) {
      std::vector<double> acc, var;
      int failed = 0;
      for (const auto& cell : grid.cells) {
        if (cell.arm != a || cell.shot != shot) continue;
        if (!cell.ok) {
          ++failed;
          continue;
        }
        acc.push_back(cell.accuracy);
        var.push_back(cell.cluster_variance);
      }
      rows.push_back({grid.arms[a].name(), shot, detail::mean_of(acc), detail::sample_std(acc),
                      detail::mean_of(var), failed});
    }
  }
  return rows;
}

inline std::vector<AlphaRow> summarize_alpha(const AblationGrid& grid, const std::vector<double>& alphas) {
  std::vector<AlphaRow> rows;
  for (std::size_t a = 0; a < grid.arms.size(); ++a) {
    if (!grid.arms[a].prior) continue;
    for (int shot : grid.shots) {
      for (std::size_t ai = 0; ai < alphas.size(); ++ai) {
        std::vector<double> acc;
        for (const auto& cell : grid.cells)
          if (cell.arm == a && cell.shot == shot && cell.ok && ai < cell.alpha_curve.size())
            acc.push_back(cell.alpha_curve[ai]);
        rows.push_back({grid.arms[a].name(), shot, alphas[ai], detail::mean_of(acc)});
      }
    }
  }
  return rows;
}

inline std::string format_real(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

inline std::string summary_csv(const std::vector<SummaryRow>& rows) {
  std::ostringstream os;
  os << "arm,shot,mean_acc,std_acc,mean_cluster_variance\n";
  for (const auto& r : rows)
    os << r.arm << ',' << r.shot << ',' << format_real(r.mean_acc) << ',' << format_real(r.std_acc) << ','
       << format_real(r.mean_cluster_variance) << '\n';
  return os.str();
}

inline std::string alpha_csv(const std::vector<AlphaRow>& rows) {
  std::ostringstream os;
  os << "arm,shot,alpha,mean_acc\n";
  for (const auto& r : rows)
    os << r.arm << ',' << r.shot << ',' << format_real(r.alpha) << ',' << format_real(r.mean_acc) << '\n';
  return os.str();
}

inline std::string cells_csv(const AblationGrid& grid) {
  std::ostringstream os;
  os << "arm,shot,seed,status,accuracy,cluster_variance,error\n";
  for (const auto& c : grid.cells) {
    os << grid.arms[c.arm].name() << ',' << c.shot << ',' << c.seed << ',' << (c.ok ? "ok" : "failed") << ','
       << format_real(c.accuracy) << ',' << format_real(c.cluster_variance) << ',';
    std::string err = c.error;
    std::replace(err.begin(), err.end(), ',', ';');
    std::replace(err.begin(), err.end(), '\n', ' ');
    os << err << '\n';
  }
  return os.str();
}

inline std::string prior_trace_csv(const std::vector<LossPoint>& trace) {
  std::ostringstream os;
  os << "step,loss\n";
  for (const auto& p : trace) os << p.step << ',' << format_real(p.loss) << '\n';
  return os.str();
}

inline std::string energy_trace_csv(const std::vector<TracePoint>& trace) {
  std::ostringstream os;
  os << "step,mean_energy,min_pairwise_distance,bandwidth\n";
  for (const auto& p : trace)
    os << p.step << ',' << format_real(p.mean_energy) << ',' << format_real(p.min_pairwise_distance) << ','
       << format_real(p.bandwidth) << '\n';
  return os.str();
}

inline std::string predictions_csv(const EvalResult& r) {
  std::ostringstream os;
  os << "instance,label,predicted,max_prob\n";
  for (const auto& p : r.predictions)
    os << p.instance << ',' << p.label << ',' << p.predicted << ',' << format_real(p.max_prob) << '\n';
  return os.str();
}

}  // namespace pprompt
