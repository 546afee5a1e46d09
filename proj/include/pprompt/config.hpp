#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "pprompt/adaptation.hpp"
#include "pprompt/json_io.hpp"
#include "pprompt/prior_training.hpp"
#include "pprompt/samplers.hpp"

namespace pprompt {

struct EncoderConfig {
  int context_dim = 16;
  std::uint64_t seed = 0;
  // Pull of the class embeddings toward the world's class prototypes.
  double alignment = 0.5;
};

struct DiagnosticsConfig {
  std::vector<int> ks = {5, 10};
  std::uint64_t seed = 0;
  int max_iter = 100;
  bool normalize = true;  // cluster unit-normalized vectors
};

struct RunConfig {
  WorldSpec world;
  EncoderConfig encoder;
  LikelihoodConfig likelihood;
  PriorConfig prior;
  PriorTrainConfig prior_train;
  // When set, prior_train.steps follows the per-shot schedule instead.
  bool prior_steps_by_shot = true;
  SamplerConfig sampler;
  AdaptConfig adapt;
  DiagnosticsConfig diagnostics;
  std::vector<double> alpha_sweep = {0.6, 0.7, 0.8, 0.9, 1.0};
  std::string output_dir = "out";

  int resolved_prior_steps() const {
    return prior_steps_by_shot ? default_prior_steps(world.shots_per_class) : prior_train.steps;
  }

  void validate() const {
    world.validate();
    detail::require(encoder.context_dim > 0, ErrorCode::invalid_argument,
                    "encoder.context_dim must be positive");
    detail::require(encoder.alignment >= 0.0 && encoder.alignment <= 1.0, ErrorCode::invalid_argument,
                    "encoder.alignment must lie in [0, 1]");
    likelihood.validate();
    prior.validate();
    prior_train.validate();
    sampler.validate();
    adapt.validate();
    for (int k : diagnostics.ks)
      detail::require(k >= 1, ErrorCode::invalid_argument, "diagnostics.ks entries must be >= 1");
    detail::require(diagnostics.max_iter >= 1, ErrorCode::invalid_argument,
                    "diagnostics.max_iter must be >= 1");
    for (double a : alpha_sweep)
      detail::require(a >= 0.0 && a <= 1.0, ErrorCode::invalid_argument,
                      "alpha_sweep entries must lie in [0, 1]");
  }
};

inline Json to_json(const RunConfig& c) {
  Json bandwidth = c.sampler.bandwidth.mode == Bandwidth::Mode::fixed
                       ? Json(c.sampler.bandwidth.value)
                       : Json("median");
  return Json{
      {"world", to_json(c.world)},
      {"encoder",
       {{"context_dim", c.encoder.context_dim},
        {"seed", c.encoder.seed},
        {"alignment", c.encoder.alignment}}},
      {"likelihood", {{"temperature", c.likelihood.temperature}}},
      {"prior", {{"sigma", c.prior.sigma}, {"enabled", c.prior.enabled}}},
      {"prior_train",
       {{"steps", c.prior_steps_by_shot ? Json("by_shot") : Json(c.prior_train.steps)},
        {"learning_rate", c.prior_train.learning_rate},
        {"log_every", c.prior_train.log_every}}},
      {"sampler",
       {{"method", to_string(c.sampler.method)},
        {"step_size", c.sampler.step_size},
        {"steps", c.sampler.steps},
        {"num_particles", c.sampler.num_particles},
        {"bandwidth", bandwidth},
        {"seed", c.sampler.seed}}},
      {"adapt", {{"alpha", c.adapt.alpha}, {"enabled", c.adapt.enabled}}},
      {"diagnostics",
       {{"ks", c.diagnostics.ks},
        {"seed", c.diagnostics.seed},
        {"max_iter", c.diagnostics.max_iter},
        {"normalize", c.diagnostics.normalize}}},
      {"alpha_sweep", c.alpha_sweep},
      {"output_dir", c.output_dir},
  };
}

namespace detail {

// Reads one section with field-precise errors; unknown keys are rejected so
// typos do not silently fall back to defaults.
class Section {
 public:
  Section(const Json& root, std::string name) : path_(std::move(name)) {
    if (root.contains(path_)) {
      node_ = &root[path_];
      if (!node_->is_object()) schema_error(path_, "expected an object");
    }
  }

  void get(const char* key, int& out) const {
    if (auto* v = find(key)) out = static_cast<int>(as_int(*v, field(key)));
  }
  void get(const char* key, double& out) const {
    if (auto* v = find(key)) out = as_real(*v, field(key));
  }
  void get(const char* key, std::uint64_t& out) const {
    if (auto* v = find(key)) out = as_uint(*v, field(key));
  }
  void get(const char* key, bool& out) const {
    if (auto* v = find(key)) {
      if (!v->is_boolean()) schema_error(field(key), "expected true or false");
      out = v->get<bool>();
    }
  }
  void get(const char* key, std::string& out) const {
    if (auto* v = find(key)) {
      if (!v->is_string()) schema_error(field(key), "expected a string");
      out = v->get<std::string>();
    }
  }

  const Json* find(const char* key) const {
    if (!node_) return nullptr;
    auto it = node_->find(key);
    return it == node_->end() ? nullptr : &*it;
  }

  void reject_unknown(std::initializer_list<const char*> known) const {
    if (!node_) return;
    for (auto it = node_->begin(); it != node_->end(); ++it) {
      bool ok = false;
      for (const char* k : known) ok = ok || it.key() == k;
      if (!ok) schema_error(field(it.key().c_str()), "unknown field");
    }
  }

  std::string field(const char* key) const { return path_ + "." + key; }

 private:
  std::string path_;
  const Json* node_ = nullptr;
};

}  // namespace detail

/// Parses a config document over the defaults. Throws Error(schema) naming
/// the offending field, or Error(dimension_mismatch) for inconsistent sizes.
inline RunConfig config_from_json(const Json& j) {
  using namespace detail;
  if (!j.is_object()) schema_error("config", "expected an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    static const char* top[] = {"world", "encoder", "likelihood", "prior", "prior_train", "sampler",
                                "adapt", "diagnostics", "alpha_sweep", "output_dir"};
    if (std::find_if(std::begin(top), std::end(top), [&](const char* k) { return it.key() == k; }) ==
        std::end(top))
      schema_error(it.key(), "unknown field");
  }

  RunConfig c;
  if (j.contains("world")) {
    Section s(j, "world");
    s.reject_unknown({"seed", "feature_dim", "num_classes", "modes_per_class", "mode_spread",
                      "noise_std", "shots_per_class", "test_per_class"});
    c.world = world_spec_from_json(j["world"], "world", c.world);
  }

  Section enc(j, "encoder");
  enc.reject_unknown({"context_dim", "seed", "alignment", "num_classes", "feature_dim"});
  enc.get("context_dim", c.encoder.context_dim);
  enc.get("alignment", c.encoder.alignment);
  enc.get("seed", c.encoder.seed);
  // Optional restatements of world dimensions; they must agree.
  if (auto* v = enc.find("feature_dim"); v && as_int(*v, enc.field("feature_dim")) != c.world.feature_dim)
    throw Error(ErrorCode::dimension_mismatch,
                "encoder.feature_dim disagrees with world.feature_dim");
  if (auto* v = enc.find("num_classes"); v && as_int(*v, enc.field("num_classes")) != c.world.num_classes)
    throw Error(ErrorCode::dimension_mismatch,
                "encoder.num_classes disagrees with world.num_classes");

  Section lik(j, "likelihood");
  lik.reject_unknown({"temperature"});
  lik.get("temperature", c.likelihood.temperature);

  Section pr(j, "prior");
  pr.reject_unknown({"sigma", "enabled"});
  pr.get("sigma", c.prior.sigma);
  pr.get("enabled", c.prior.enabled);

  Section pt(j, "prior_train");
  pt.reject_unknown({"steps", "learning_rate", "log_every"});
  if (auto* v = pt.find("steps")) {
    if (v->is_string()) {
      if (v->get<std::string>() != "by_shot") schema_error(pt.field("steps"), "expected an integer or \"by_shot\"");
      c.prior_steps_by_shot = true;
    } else {
      c.prior_train.steps = static_cast<int>(as_int(*v, pt.field("steps")));
      c.prior_steps_by_shot = false;
    }
  }
  pt.get("learning_rate", c.prior_train.learning_rate);
  pt.get("log_every", c.prior_train.log_every);

  Section sm(j, "sampler");
  sm.reject_unknown({"method", "step_size", "steps", "num_particles", "bandwidth", "seed"});
  std::string method = to_string(c.sampler.method);
  sm.get("method", method);
  try {
    c.sampler.method = method_from_string(method);
  } catch (const Error&) {
    schema_error(sm.field("method"), "expected one of SGD, SGLD, SVGD");
  }
  sm.get("step_size", c.sampler.step_size);
  sm.get("steps", c.sampler.steps);
  sm.get("num_particles", c.sampler.num_particles);
  sm.get("seed", c.sampler.seed);
  if (auto* v = sm.find("bandwidth")) {
    if (v->is_string()) {
      if (v->get<std::string>() != "median") schema_error(sm.field("bandwidth"), "expected a number or \"median\"");
      c.sampler.bandwidth = {Bandwidth::Mode::median_heuristic, 1.0};
    } else {
      c.sampler.bandwidth = {Bandwidth::Mode::fixed, as_real(*v, sm.field("bandwidth"))};
    }
  }

  Section ad(j, "adapt");
  ad.reject_unknown({"alpha", "enabled"});
  ad.get("alpha", c.adapt.alpha);
  ad.get("enabled", c.adapt.enabled);

  Section dg(j, "diagnostics");
  dg.reject_unknown({"ks", "seed", "max_iter", "normalize"});
  if (auto* v = dg.find("ks")) c.diagnostics.ks = ints_from_json(*v, dg.field("ks"));
  dg.get("seed", c.diagnostics.seed);
  dg.get("max_iter", c.diagnostics.max_iter);
  dg.get("normalize", c.diagnostics.normalize);

  if (j.contains("alpha_sweep")) {
    const Vector a = vector_from_json(j["alpha_sweep"], "alpha_sweep");
    c.alpha_sweep.assign(a.data(), a.data() + a.size());
  }
  if (j.contains("output_dir")) {
    if (!j["output_dir"].is_string()) schema_error("output_dir", "expected a string");
    c.output_dir = j["output_dir"].get<std::string>();
  }

  try {
    c.validate();
  } catch (const Error& e) {
    if (e.code() == ErrorCode::invalid_argument) throw Error(ErrorCode::schema, e.what());
    throw;
  }
  return c;
}

inline RunConfig load_config(const std::filesystem::path& path) {
  return config_from_json(read_json_file(path));
}

// Task files must match the configured world dimensions.
inline void check_task_matches(const RunConfig& c, const FewShotTask& task) {
  if (task.feature_dim() != c.world.feature_dim)
    throw Error(ErrorCode::dimension_mismatch,
                "task feature_dim " + std::to_string(task.feature_dim()) +
                    " disagrees with world.feature_dim " + std::to_string(c.world.feature_dim));
  if (task.num_classes != c.world.num_classes)
    throw Error(ErrorCode::dimension_mismatch,
                "task num_classes " + std::to_string(task.num_classes) +
                    " disagrees with world.num_classes " + std::to_string(c.world.num_classes));
}

// ---- checkpoint ---------------------------------------------------------

inline constexpr int kCheckpointVersion = 1;

struct Checkpoint {
  RunConfig config;
  FrozenEncoders encoders;
  PriorNet prior_net;
  bool prior_trained = false;
  ContextEnsemble ensemble;  // empty until a sampler has run
  int format_version = kCheckpointVersion;
};

inline Json to_json(const Checkpoint& ck) {
  return Json{
      {"format_version", ck.format_version},
      {"config", to_json(ck.config)},
      {"encoders",
       {{"seed", ck.encoders.seed()},
        {"text_map", detail::matrix_to_json(ck.encoders.text_map())},
        {"class_embeddings", detail::matrix_to_json(ck.encoders.class_embeddings())}}},
      {"prior_net",
       {{"trained", ck.prior_trained},
        {"A", detail::matrix_to_json(ck.prior_net.A)},
        {"b", detail::vector_to_json(ck.prior_net.b)}}},
      {"ensemble",
       {{"step_count", ck.ensemble.step_count},
        {"particles", detail::matrix_to_json(ck.ensemble.particles)}}},
  };
}

inline Checkpoint checkpoint_from_json(const Json& j) {
  using namespace detail;
  const auto version = as_int(at_field(j, "format_version", ""), "format_version");
  if (version != kCheckpointVersion)
    throw Error(ErrorCode::version, "checkpoint format_version " + std::to_string(version) +
                                        " is not supported (expected " +
                                        std::to_string(kCheckpointVersion) + ")");
  RunConfig cfg = config_from_json(at_field(j, "config", ""));
  const Json& e = at_field(j, "encoders", "");
  const Index d = cfg.encoder.context_dim;
  FrozenEncoders enc(matrix_from_json(at_field(e, "text_map", "encoders"), "encoders.text_map", 2 * d),
                     matrix_from_json(at_field(e, "class_embeddings", "encoders"),
                                      "encoders.class_embeddings", d),
                     as_uint(at_field(e, "seed", "encoders"), "encoders.seed"));
  if (enc.feature_dim() != cfg.world.feature_dim || enc.num_classes() != cfg.world.num_classes)
    throw Error(ErrorCode::dimension_mismatch, "checkpoint encoders disagree with config dimensions");

  const Json& p = at_field(j, "prior_net", "");
  PriorNet net{matrix_from_json(at_field(p, "A", "prior_net"), "prior_net.A", cfg.world.feature_dim),
               vector_from_json(at_field(p, "b", "prior_net"), "prior_net.b", d)};
  if (net.A.rows() != d) schema_error("prior_net.A", "expected " + std::to_string(d) + " rows");
  const Json& trained = at_field(p, "trained", "prior_net");
  if (!trained.is_boolean()) schema_error("prior_net.trained", "expected true or false");

  const Json& en = at_field(j, "ensemble", "");
  ContextEnsemble ens{matrix_from_json(at_field(en, "particles", "ensemble"), "ensemble.particles", d),
                      as_uint(at_field(en, "step_count", "ensemble"), "ensemble.step_count")};
  return Checkpoint{std::move(cfg), std::move(enc), std::move(net), trained.get<bool>(), std::move(ens),
                    static_cast<int>(version)};
}

inline void save_checkpoint(const Checkpoint& ck, const std::filesystem::path& path) {
  write_json_file(path, to_json(ck));
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  return checkpoint_from_json(read_json_file(path));
}

}  // namespace pprompt
