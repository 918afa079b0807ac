#include "ig/io/config.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace ig {

namespace {

using json = nlohmann::ordered_json;

[[noreturn]] void bad(const std::string& msg) { throw std::runtime_error("config: " + msg); }

void check_keys(const json& j, const std::string& scope,
                std::initializer_list<const char*> allowed) {
  if (!j.is_object()) bad("'" + scope + "' must be an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool known = false;
    for (const char* a : allowed)
      if (it.key() == a) {
        known = true;
        break;
      }
    if (!known) bad("unknown key '" + (scope.empty() ? "" : scope + ".") + it.key() + "'");
  }
}

template <typename T>
void get_to(const json& j, const std::string& scope, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const std::exception&) {
    bad("bad value for '" + (scope.empty() ? "" : scope + ".") + key + "'");
  }
}

template <typename E>
void get_enum(const json& j, const std::string& scope, const char* key, E& out,
              E (*from_name)(const std::string&)) {
  if (!j.contains(key)) return;
  std::string name;
  get_to(j, scope, key, name);
  try {
    out = from_name(name);
  } catch (const std::exception&) {
    bad("bad value for '" + scope + "." + key + "': '" + name + "'");
  }
}

GateLocation location_from_name(const std::string& name) {
  if (name == "input") return GateLocation::input;
  if (name == "feature") return GateLocation::feature;
  throw std::invalid_argument("unknown gate location '" + name + "'");
}

std::string location_name(GateLocation l) {
  return l == GateLocation::input ? "input" : "feature";
}

GateMode mode_from_name(const std::string& name) {
  if (name == "cooperative") return GateMode::cooperative;
  if (name == "adversarial") return GateMode::adversarial;
  throw std::invalid_argument("unknown gate mode '" + name + "'");
}

std::string mode_name(GateMode m) {
  return m == GateMode::cooperative ? "cooperative" : "adversarial";
}

LambdaSchedule::Kind lambda_kind_from_name(const std::string& name) {
  if (name == "constant") return LambdaSchedule::Kind::constant;
  if (name == "linear_ramp") return LambdaSchedule::Kind::linear_ramp;
  throw std::invalid_argument("unknown lambda kind '" + name + "'");
}

std::string lambda_kind_name(LambdaSchedule::Kind k) {
  return k == LambdaSchedule::Kind::constant ? "constant" : "linear_ramp";
}

void parse_env(const json& j, EnvConfig& env) {
  check_keys(j, "env", {"extent", "channels", "step_px", "level", "amplitude", "episode_len"});
  get_to(j, "env", "extent", env.extent);
  get_to(j, "env", "channels", env.channels);
  get_to(j, "env", "step_px", env.step_px);
  get_enum(j, "env", "level", env.level, level_from_name);
  get_to(j, "env", "amplitude", env.amplitude);
  get_to(j, "env", "episode_len", env.episode_len);
}

void parse_gen(const json& j, GenConfig& gen) {
  check_keys(j, "gen", {"episodes", "k_max", "policy", "epsilon", "eval_render"});
  get_to(j, "gen", "episodes", gen.episodes);
  get_to(j, "gen", "k_max", gen.k_max);
  get_enum(j, "gen", "policy", gen.policy, policy_from_name);
  get_to(j, "gen", "epsilon", gen.epsilon);
  get_to(j, "gen", "eval_render", gen.eval_render);
}

void parse_net(const json& j, NetConfig& net) {
  check_keys(j, "net",
             {"extent", "channels", "dz", "actions", "mask_c1", "mask_c2", "mask_fc", "mask_u1",
              "mask_u2", "enc_c1", "enc_c2", "enc_c3", "head_hidden", "pred_hidden", "gn_groups",
              "mask_bias"});
  get_to(j, "net", "extent", net.extent);
  get_to(j, "net", "channels", net.channels);
  get_to(j, "net", "dz", net.dz);
  get_to(j, "net", "actions", net.actions);
  get_to(j, "net", "mask_c1", net.mask_c1);
  get_to(j, "net", "mask_c2", net.mask_c2);
  get_to(j, "net", "mask_fc", net.mask_fc);
  get_to(j, "net", "mask_u1", net.mask_u1);
  get_to(j, "net", "mask_u2", net.mask_u2);
  get_to(j, "net", "enc_c1", net.enc_c1);
  get_to(j, "net", "enc_c2", net.enc_c2);
  get_to(j, "net", "enc_c3", net.enc_c3);
  get_to(j, "net", "head_hidden", net.head_hidden);
  get_to(j, "net", "pred_hidden", net.pred_hidden);
  get_to(j, "net", "gn_groups", net.gn_groups);
  get_to(j, "net", "mask_bias", net.mask_bias);
}

void parse_noise(const json& j, const std::string& scope, NoiseSpec& n) {
  check_keys(j, scope, {"mean", "std"});
  get_to(j, scope, "mean", n.mean);
  get_to(j, scope, "std", n.stddev);
}

void parse_gate(const json& j, GateConfig& gate) {
  check_keys(j, "gate",
             {"enabled", "location", "mode", "lambda", "warmup_steps", "mix_unmasked",
              "shuffle_prob", "random_baseline", "keep_prob", "force_open", "noise",
              "feature_noise"});
  get_to(j, "gate", "enabled", gate.enabled);
  get_enum(j, "gate", "location", gate.location, location_from_name);
  get_enum(j, "gate", "mode", gate.mode, mode_from_name);
  if (j.contains("lambda")) {
    const json& l = j.at("lambda");
    check_keys(l, "gate.lambda", {"kind", "start", "end", "ramp_steps"});
    get_enum(l, "gate.lambda", "kind", gate.lambda.kind, lambda_kind_from_name);
    get_to(l, "gate.lambda", "start", gate.lambda.start);
    get_to(l, "gate.lambda", "end", gate.lambda.end);
    get_to(l, "gate.lambda", "ramp_steps", gate.lambda.ramp_steps);
  }
  get_to(j, "gate", "warmup_steps", gate.warmup_steps);
  get_to(j, "gate", "mix_unmasked", gate.mix_unmasked);
  get_to(j, "gate", "shuffle_prob", gate.shuffle_prob);
  get_to(j, "gate", "random_baseline", gate.random_baseline);
  get_to(j, "gate", "keep_prob", gate.keep_prob);
  get_to(j, "gate", "force_open", gate.force_open);
  if (j.contains("noise")) parse_noise(j.at("noise"), "gate.noise", gate.noise);
  if (j.contains("feature_noise"))
    parse_noise(j.at("feature_noise"), "gate.feature_noise", gate.feature_noise);
}

void parse_train(const json& j, TrainConfig& tr) {
  check_keys(j, "train",
             {"objective", "batch", "steps", "eval_interval", "eval_records", "lr_encoder",
              "lr_mask", "gamma", "target_sync", "crop_pad", "reverse_probe", "probe_steps",
              "probe_lr", "probe_batch"});
  get_enum(j, "train", "objective", tr.objective, objective_from_name);
  get_to(j, "train", "batch", tr.batch);
  get_to(j, "train", "steps", tr.steps);
  get_to(j, "train", "eval_interval", tr.eval_interval);
  get_to(j, "train", "eval_records", tr.eval_records);
  get_to(j, "train", "lr_encoder", tr.lr_encoder);
  get_to(j, "train", "lr_mask", tr.lr_mask);
  get_to(j, "train", "gamma", tr.gamma);
  get_to(j, "train", "target_sync", tr.target_sync);
  get_to(j, "train", "crop_pad", tr.crop_pad);
  get_to(j, "train", "reverse_probe", tr.reverse_probe);
  get_to(j, "train", "probe_steps", tr.probe_steps);
  get_to(j, "train", "probe_lr", tr.probe_lr);
  get_to(j, "train", "probe_batch", tr.probe_batch);
}

void parse_data(const json& j, DataPaths& d) {
  check_keys(j, "data", {"dataset", "probe_train", "probe_eval", "params"});
  get_to(j, "data", "dataset", d.dataset);
  get_to(j, "data", "probe_train", d.probe_train);
  get_to(j, "data", "probe_eval", d.probe_eval);
  get_to(j, "data", "params", d.params);
}

void parse_sweep(const json& j, SweepSpec& s) {
  check_keys(j, "sweep", {"lambdas", "seeds"});
  get_to(j, "sweep", "lambdas", s.lambdas);
  get_to(j, "sweep", "seeds", s.seeds);
}

json to_json(const RunConfig& c, bool with_paths) {
  json j;
  j["seed"] = c.seed;
  if (with_paths) j["outdir"] = c.outdir;
  json env;
  env["extent"] = c.env.extent;
  env["channels"] = c.env.channels;
  env["step_px"] = c.env.step_px;
  env["level"] = level_name(c.env.level);
  env["amplitude"] = c.env.amplitude;
  env["episode_len"] = c.env.episode_len;
  j["env"] = env;
  json gen;
  gen["episodes"] = c.gen.episodes;
  gen["k_max"] = c.gen.k_max;
  gen["policy"] = policy_name(c.gen.policy);
  gen["epsilon"] = c.gen.epsilon;
  gen["eval_render"] = c.gen.eval_render;
  j["gen"] = gen;
  const NetConfig& n = c.train.net;
  json net;
  net["extent"] = n.extent;
  net["channels"] = n.channels;
  net["dz"] = n.dz;
  net["actions"] = n.actions;
  net["mask_c1"] = n.mask_c1;
  net["mask_c2"] = n.mask_c2;
  net["mask_fc"] = n.mask_fc;
  net["mask_u1"] = n.mask_u1;
  net["mask_u2"] = n.mask_u2;
  net["enc_c1"] = n.enc_c1;
  net["enc_c2"] = n.enc_c2;
  net["enc_c3"] = n.enc_c3;
  net["head_hidden"] = n.head_hidden;
  net["pred_hidden"] = n.pred_hidden;
  net["gn_groups"] = n.gn_groups;
  net["mask_bias"] = n.mask_bias;
  j["net"] = net;
  const GateConfig& g = c.train.gate;
  json gate;
  gate["enabled"] = g.enabled;
  gate["location"] = location_name(g.location);
  gate["mode"] = mode_name(g.mode);
  json lam;
  lam["kind"] = lambda_kind_name(g.lambda.kind);
  lam["start"] = g.lambda.start;
  lam["end"] = g.lambda.end;
  lam["ramp_steps"] = g.lambda.ramp_steps;
  gate["lambda"] = lam;
  gate["warmup_steps"] = g.warmup_steps;
  gate["mix_unmasked"] = g.mix_unmasked;
  gate["shuffle_prob"] = g.shuffle_prob;
  gate["random_baseline"] = g.random_baseline;
  gate["keep_prob"] = g.keep_prob;
  gate["force_open"] = g.force_open;
  json noise;
  noise["mean"] = g.noise.mean;
  noise["std"] = g.noise.stddev;
  gate["noise"] = noise;
  json fnoise;
  fnoise["mean"] = g.feature_noise.mean;
  fnoise["std"] = g.feature_noise.stddev;
  gate["feature_noise"] = fnoise;
  j["gate"] = gate;
  const TrainConfig& t = c.train;
  json train;
  train["objective"] = objective_name(t.objective);
  train["batch"] = t.batch;
  train["steps"] = t.steps;
  train["eval_interval"] = t.eval_interval;
  train["eval_records"] = t.eval_records;
  train["lr_encoder"] = t.lr_encoder;
  train["lr_mask"] = t.lr_mask;
  train["gamma"] = t.gamma;
  train["target_sync"] = t.target_sync;
  train["crop_pad"] = t.crop_pad;
  train["reverse_probe"] = t.reverse_probe;
  train["probe_steps"] = t.probe_steps;
  train["probe_lr"] = t.probe_lr;
  train["probe_batch"] = t.probe_batch;
  j["train"] = train;
  if (with_paths) {
    json data;
    data["dataset"] = c.data.dataset;
    data["probe_train"] = c.data.probe_train;
    data["probe_eval"] = c.data.probe_eval;
    data["params"] = c.data.params;
    j["data"] = data;
  }
  json sweep;
  sweep["lambdas"] = c.sweep.lambdas;
  sweep["seeds"] = c.sweep.seeds;
  j["sweep"] = sweep;
  j["render_records"] = c.render_records;
  return j;
}

}  // namespace

RunConfig parse_config_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const std::exception& e) {
    throw std::runtime_error(std::string("config parse error: ") + e.what());
  }
  RunConfig c;
  check_keys(j, "",
             {"seed", "outdir", "env", "gen", "net", "gate", "train", "data", "sweep",
              "render_records"});
  get_to(j, "", "seed", c.seed);
  get_to(j, "", "outdir", c.outdir);
  if (j.contains("env")) parse_env(j.at("env"), c.env);
  if (j.contains("gen")) parse_gen(j.at("gen"), c.gen);
  if (j.contains("net")) parse_net(j.at("net"), c.train.net);
  if (j.contains("gate")) parse_gate(j.at("gate"), c.train.gate);
  if (j.contains("train")) parse_train(j.at("train"), c.train);
  if (j.contains("data")) parse_data(j.at("data"), c.data);
  if (j.contains("sweep")) parse_sweep(j.at("sweep"), c.sweep);
  get_to(j, "", "render_records", c.render_records);
  return c;
}

RunConfig load_config_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read config '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str());
}

std::string canonical_config(const RunConfig& cfg) {
  return to_json(cfg, /*with_paths=*/true).dump(2) + "\n";
}

uint64_t fnv1a64(std::string_view s) {
  uint64_t h = 14695981039346656037ull;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  return h;
}

std::string config_hash(const RunConfig& cfg) {
  const std::string basis = to_json(cfg, /*with_paths=*/false).dump(2);
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(fnv1a64(basis)));
  return std::string(buf);
}

}  // namespace ig
