#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "pprompt/pprompt.hpp"

namespace fs = std::filesystem;
using namespace pprompt;

namespace {

struct Common {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir;
};

RunConfig resolve_config(const Common& o) {
  RunConfig c = o.config_path.empty() ? RunConfig{} : load_config(o.config_path);
  if (o.seed) c = with_seed(c, *o.seed);
  if (!o.out_dir.empty()) c.output_dir = o.out_dir;
  return c;
}

fs::path output_dir(const RunConfig& c) {
  fs::path dir = c.output_dir;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::io, "cannot create output directory " + dir.string() + ": " + ec.message());
  return dir;
}

void add_common(CLI::App* cmd, Common& o, bool with_config = true) {
  if (with_config) cmd->add_option("-c,--config", o.config_path, "run config JSON");
  cmd->add_option("--seed", o.seed, "replicate seed; derives every random stream");
  cmd->add_option("--out-dir", o.out_dir, "directory for CSV traces (overrides output_dir)");
}

int gen_data(const Common& o, const std::string& out) {
  const RunConfig c = resolve_config(o);
  const FewShotTask task = generate_task(c.world);
  save_task(task, out);
  std::cout << "wrote " << out << " (" << task.train.size() << " train, " << task.test.size() << " test)\n";
  return 0;
}

int train_prior_cmd(const Common& o, const std::string& task_path, const std::string& out) {
  RunConfig c = resolve_config(o);
  const FewShotTask task = load_task(task_path);
  check_task_matches(c, task);
  c.prior.enabled = true;
  const FrozenEncoders enc = make_encoders(c);
  const PriorTrainResult prior = prior_stage(c, enc, task);
  write_text_file(output_dir(c) / "prior_trace.csv", prior_trace_csv(prior.trace));
  save_checkpoint({c, enc, prior.net, true, ContextEnsemble{Matrix(0, c.encoder.context_dim)}}, out);
  std::cout << "prior loss " << format_real(prior.trace.front().loss) << " -> "
            << format_real(prior.trace.back().loss) << "; wrote " << out << "\n";
  return 0;
}

struct TrainOverrides {
  std::string method;
  std::optional<int> steps;
  std::optional<int> particles;
  std::optional<double> step_size;
};

int train_cmd(const Common& o, const std::string& ckpt_path, const std::string& task_path, const std::string& out,
              const TrainOverrides& ov) {
  std::optional<Checkpoint> ck;
  if (!ckpt_path.empty()) {
    ck = load_checkpoint(ckpt_path);
    if (o.seed) ck->config = with_seed(ck->config, *o.seed);
    if (!o.out_dir.empty()) ck->config.output_dir = o.out_dir;
  } else {
    const RunConfig c = resolve_config(o);
    ck = Checkpoint{c, make_encoders(c), PriorNet::zeros(c.encoder.context_dim, c.world.feature_dim), false, {}};
  }
  RunConfig& c = ck->config;
  if (!ov.method.empty()) c.sampler.method = method_from_string(ov.method);
  if (ov.steps) c.sampler.steps = *ov.steps;
  if (ov.particles) c.sampler.num_particles = *ov.particles;
  if (ov.step_size) c.sampler.step_size = *ov.step_size;
  c.validate();

  const FewShotTask task = load_task(task_path);
  check_task_matches(c, task);
  if (c.prior.enabled && !ck->prior_trained) {
    const PriorTrainResult prior = prior_stage(c, ck->encoders, task);
    ck->prior_net = prior.net;
    ck->prior_trained = true;
    write_text_file(output_dir(c) / "prior_trace.csv", prior_trace_csv(prior.trace));
  }
  const SamplerResult r = sampler_stage(c, ck->encoders, task, ck->prior_net, initial_ensemble(c));
  write_text_file(output_dir(c) / "energy_trace.csv", energy_trace_csv(r.trace));
  ck->ensemble = r.ensemble;
  save_checkpoint(*ck, out);
  std::cout << to_string(c.sampler.method) << " mean energy " << format_real(r.trace.front().mean_energy) << " -> "
            << format_real(r.trace.back().mean_energy) << "; wrote " << out << "\n";
  return 0;
}

Checkpoint load_trained(const std::string& path) {
  Checkpoint ck = load_checkpoint(path);
  if (ck.ensemble.size() == 0)
    throw Error(ErrorCode::invalid_argument, path + " holds no context particles; run `train` first");
  return ck;
}

int eval_cmd(const Common& o, const std::string& ckpt_path, const std::string& task_path, const std::string& out,
             std::optional<double> alpha, bool no_adapt) {
  Checkpoint ck = load_trained(ckpt_path);
  RunConfig& c = ck.config;
  if (!o.out_dir.empty()) c.output_dir = o.out_dir;
  if (alpha) {
    c.adapt.alpha = *alpha;
    c.adapt.enabled = true;
  }
  if (no_adapt) c.adapt.enabled = false;
  c.validate();
  const FewShotTask task = load_task(task_path);
  check_task_matches(c, task);
  const Metrics m = eval_stage(c, ck.encoders, ck.prior_net, ck.prior_trained, ck.ensemble, task);
  write_text_file(output_dir(c) / "predictions.csv", predictions_csv(m.eval));
  const Json j = metrics_to_json(c, m, utc_timestamp());
  if (out.empty())
    std::cout << j.dump(2) << "\n";
  else {
    write_json_file(out, j);
    std::cout << "accuracy " << format_real(m.eval.accuracy) << "; wrote " << out << "\n";
  }
  return 0;
}

int diag_cmd(const std::string& ckpt_path, const std::string& task_path, std::vector<int> ks) {
  const Checkpoint ck = load_trained(ckpt_path);
  const RunConfig& c = ck.config;
  const FewShotTask task = load_task(task_path);
  check_task_matches(c, task);
  if (ks.empty()) ks = c.diagnostics.ks;
  const AdaptConfig acfg = effective_adapt(c, ck.prior_trained);
  Json j = Json::object();
  for (int k : ks) {
    const ClusterDiag d = prompt_cluster_variance(ck.encoders, ck.prior_net, ck.ensemble, task, k, acfg,
                                                  c.diagnostics.seed, c.diagnostics.normalize,
                                                  c.diagnostics.max_iter);
    j[std::to_string(k)] = Json{{"counts", d.counts}, {"variance", d.variance}};
  }
  std::cout << j.dump(2) << "\n";
  return 0;
}

int ablate_cmd(const Common& o, const std::vector<int>& shots, const std::vector<std::uint64_t>& seeds) {
  const RunConfig c = resolve_config(o);
  AblationGrid grid;
  if (!shots.empty()) grid.shots = shots;
  if (!seeds.empty()) grid.seeds = seeds;
  run_ablation(c, grid);
  const fs::path dir = output_dir(c);
  const auto rows = summarize(grid);
  write_text_file(dir / "ablation_summary.csv", summary_csv(rows));
  write_text_file(dir / "ablation_alpha.csv", alpha_csv(summarize_alpha(grid, c.alpha_sweep)));
  write_text_file(dir / "ablation_cells.csv", cells_csv(grid));
  std::cout << summary_csv(rows);
  int failed = 0;
  for (const auto& r : rows) failed += r.failed;
  if (failed) std::cerr << failed << " cell(s) failed; see ablation_cells.csv\n";
  return 0;
}

void report(ErrorCode code, const std::string& message) {
  std::cerr << Json{{"error", to_string(code)}, {"code", static_cast<int>(code)}, {"message", message}}.dump()
            << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Few-shot context learning with a feature-conditioned prior and particle samplers"};
  app.require_subcommand(1);

  Common common;
  std::string task_path, out, ckpt_path;

  auto* gen = app.add_subcommand("gen-data", "draw a synthetic few-shot task");
  add_common(gen, common);
  gen->add_option("-o,--out", out, "task JSON to write")->required();

  auto* tp = app.add_subcommand("train-prior", "fit the feature-to-context prior map");
  add_common(tp, common);
  tp->add_option("-t,--task", task_path, "task JSON")->required();
  tp->add_option("-o,--out", out, "checkpoint to write")->required();

  TrainOverrides ov;
  auto* tr = app.add_subcommand("train", "run a sampler over the context vectors");
  add_common(tr, common);
  tr->add_option("--checkpoint", ckpt_path, "checkpoint from train-prior");
  tr->add_option("-t,--task", task_path, "task JSON")->required();
  tr->add_option("-o,--out", out, "checkpoint to write")->required();
  tr->add_option("--method", ov.method, "SGD, SGLD or SVGD");
  tr->add_option("--steps", ov.steps);
  tr->add_option("--particles", ov.particles);
  tr->add_option("--step-size", ov.step_size);

  std::optional<double> alpha;
  bool no_adapt = false;
  auto* ev = app.add_subcommand("eval", "score a trained checkpoint on the task's test split");
  ev->add_option("--checkpoint", ckpt_path, "trained checkpoint")->required();
  ev->add_option("-t,--task", task_path, "task JSON")->required();
  ev->add_option("-o,--out", out, "metrics JSON to write (stdout if omitted)");
  ev->add_option("--out-dir", common.out_dir, "directory for predictions.csv");
  auto* alpha_opt = ev->add_option("--alpha", alpha, "blend weight of the learned text feature");
  ev->add_flag("--no-adapt", no_adapt, "use the learned text features only")->excludes(alpha_opt);

  std::vector<int> shots;
  std::vector<std::uint64_t> seeds;
  auto* ab = app.add_subcommand("ablate", "sampler x prior x shot sweep");
  add_common(ab, common);
  ab->add_option("--shots", shots)->delimiter(',');
  ab->add_option("--seeds", seeds)->delimiter(',');

  std::vector<int> ks;
  auto* dg = app.add_subcommand("diag", "cluster-count variance of the learned text features");
  dg->add_option("--checkpoint", ckpt_path, "trained checkpoint")->required();
  dg->add_option("-t,--task", task_path, "task JSON")->required();
  dg->add_option("-k", ks, "cluster counts (repeatable)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    report(ErrorCode::invalid_argument, e.what());
    return static_cast<int>(ErrorCode::invalid_argument);
  }

  try {
    if (*gen) return gen_data(common, out);
    if (*tp) return train_prior_cmd(common, task_path, out);
    if (*tr) return train_cmd(common, ckpt_path, task_path, out, ov);
    if (*ev) return eval_cmd(common, ckpt_path, task_path, out, alpha, no_adapt);
    if (*ab) return ablate_cmd(common, shots, seeds);
    if (*dg) return diag_cmd(ckpt_path, task_path, ks);
  } catch (const Error& e) {
    report(e.code(), e.what());
    return static_cast<int>(e.code());
  } catch (const std::exception& e) {
    std::cerr << Json{{"error", "internal"}, {"code", 1}, {"message", e.what()}}.dump() << "\n";
    return 1;
  }
  return 0;
}
