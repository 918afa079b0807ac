#include "ig/io/cli.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"

#include "ig/core/gradcheck.hpp"
#include "ig/core/serialize.hpp"
#include "ig/io/config.hpp"
#include "ig/io/images.hpp"
#include "ig/train/trainer.hpp"

namespace ig {

namespace {

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

// Everything a flag can override; only values the user actually passed are
// applied, so flags always win over the config file.
struct Overrides {
  std::string config_path;
  uint64_t seed = 0;
  std::string outdir, dataset, probe_train, probe_eval, params;
  std::string objective, mode, location, level;
  long steps = 0, warmup = 0;
  int batch = 0, episodes = 0, k_max = 0, records = 0;
  double lambda = 0.0, keep_prob = 0.0, lr_encoder = 0.0, lr_mask = 0.0;
  bool force_open = false, random_baseline = false, mix_unmasked = true;
  bool eval_render = false, reverse_probe = false;
  int cases = 50;  // gradcheck only
};

void add_common_options(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--config", o.config_path, "JSON config file");
  cmd->add_option("--seed", o.seed, "run seed");
  cmd->add_option("--outdir", o.outdir, "artifact root directory");
  cmd->add_option("--dataset", o.dataset, "training dataset (IGDS)");
  cmd->add_option("--probe-train", o.probe_train, "probe training dataset (IGDS)");
  cmd->add_option("--probe-eval", o.probe_eval, "probe evaluation dataset (IGDS)");
  cmd->add_option("--params", o.params, "IGPS parameter file");
  cmd->add_option("--objective", o.objective, "inverse|forward|td|bc|simsiam");
  cmd->add_option("--mode", o.mode, "cooperative|adversarial");
  cmd->add_option("--location", o.location, "input|feature");
  cmd->add_option("--level", o.level, "none|easy|medium|hard");
  cmd->add_option("--steps", o.steps, "optimizer steps");
  cmd->add_option("--warmup", o.warmup, "gate warm-up steps");
  cmd->add_option("--batch", o.batch, "batch size");
  cmd->add_option("--episodes", o.episodes, "episodes to generate");
  cmd->add_option("--k-max", o.k_max, "max temporal offset");
  cmd->add_option("--records", o.records, "records to render");
  cmd->add_option("--lambda", o.lambda, "constant sparsity weight");
  cmd->add_option("--keep-prob", o.keep_prob, "random-baseline keep probability");
  cmd->add_option("--lr-encoder", o.lr_encoder, "encoder/heads learning rate");
  cmd->add_option("--lr-mask", o.lr_mask, "gate-net learning rate");
  cmd->add_option("--force-open", o.force_open, "pin gates to 1");
  cmd->add_option("--random-baseline", o.random_baseline, "Bernoulli masks");
  cmd->add_option("--mix-unmasked", o.mix_unmasked, "add the raw-view task term");
  cmd->add_option("--eval-render", o.eval_render, "render noise-free observations");
  cmd->add_option("--reverse-probe", o.reverse_probe, "train the complement encoder");
}

RunConfig resolve_config(const CLI::App* cmd, const Overrides& o) {
  RunConfig cfg =
      o.config_path.empty() ? RunConfig{} : load_config_file(o.config_path);
  auto set = [&](const char* flag) { return cmd->count(flag) > 0; };
  if (set("--seed")) cfg.seed = o.seed;
  if (set("--outdir")) cfg.outdir = o.outdir;
  if (set("--dataset")) cfg.data.dataset = o.dataset;
  if (set("--probe-train")) cfg.data.probe_train = o.probe_train;
  if (set("--probe-eval")) cfg.data.probe_eval = o.probe_eval;
  if (set("--params")) cfg.data.params = o.params;
  if (set("--objective")) cfg.train.objective = objective_from_name(o.objective);
  if (set("--mode"))
    cfg.train.gate.mode =
        o.mode == "adversarial" ? GateMode::adversarial : GateMode::cooperative;
  if (set("--location"))
    cfg.train.gate.location =
        o.location == "feature" ? GateLocation::feature : GateLocation::input;
  if (set("--level")) cfg.env.level = level_from_name(o.level);
  if (set("--steps")) cfg.train.steps = o.steps;
  if (set("--warmup")) cfg.train.gate.warmup_steps = o.warmup;
  if (set("--batch")) cfg.train.batch = o.batch;
  if (set("--episodes")) cfg.gen.episodes = o.episodes;
  if (set("--k-max")) cfg.gen.k_max = o.k_max;
  if (set("--records")) cfg.render_records = o.records;
  if (set("--lambda")) cfg.train.gate.lambda = LambdaSchedule::constant(o.lambda);
  if (set("--keep-prob")) cfg.train.gate.keep_prob = o.keep_prob;
  if (set("--lr-encoder")) cfg.train.lr_encoder = o.lr_encoder;
  if (set("--lr-mask")) cfg.train.lr_mask = o.lr_mask;
  if (set("--force-open")) cfg.train.gate.force_open = o.force_open;
  if (set("--random-baseline")) cfg.train.gate.random_baseline = o.random_baseline;
  if (set("--mix-unmasked")) cfg.train.gate.mix_unmasked = o.mix_unmasked;
  if (set("--eval-render")) cfg.gen.eval_render = o.eval_render;
  if (set("--reverse-probe")) cfg.train.reverse_probe = o.reverse_probe;
  return cfg;
}

fs::path artifact_dir(const RunConfig& cfg, const std::string& command,
                      const std::string& hash) {
  fs::path dir = fs::path(cfg.outdir) / command / hash;
  fs::create_directories(dir);
  return dir;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw std::runtime_error("write failed for '" + path.string() + "'");
}

void note(const fs::path& path) { std::cout << "wrote " << path.string() << "\n"; }

Dataset load_dataset_checked(const std::string& path, const char* role) {
  if (path.empty())
    throw std::runtime_error(std::string(role) + ": no dataset path configured");
  if (!fs::exists(path))
    throw std::runtime_error(std::string(role) + ": dataset not found '" + path + "'");
  return load_dataset(path);
}

// json's shortest round-trip double formatting, reused for CSV cells
std::string num(double v) { return ordered_json(v).dump(); }

int cmd_gen_data(const RunConfig& cfg) {
  const std::string hash = config_hash(cfg);
  const fs::path dir = artifact_dir(cfg, "gen-data", hash);
  Dataset ds = generate_dataset(cfg.env, cfg.gen, cfg.seed, hash);
  save_dataset(ds, (dir / "dataset.igds").string());
  note(dir / "dataset.igds");
  write_text(dir / "config.json", canonical_config(cfg));
  note(dir / "config.json");
  return 0;
}

int cmd_train(const RunConfig& cfg) {
  const std::string hash = config_hash(cfg);
  Dataset ds = load_dataset_checked(cfg.data.dataset, "train");
  TrainResult r = train(cfg.train, ds, cfg.seed, hash);

  const fs::path dir = artifact_dir(cfg, "train", hash);
  write_runlog(r.log, (dir / "runlog.jsonl").string());
  note(dir / "runlog.jsonl");
  save_params(r.encoder.params, (dir / "encoder.igps").string());
  note(dir / "encoder.igps");
  save_params(r.heads.params, (dir / "heads.igps").string());
  note(dir / "heads.igps");
  if (cfg.train.gate.location == GateLocation::input) {
    save_params(r.mask_net.params, (dir / "mask.igps").string());
    note(dir / "mask.igps");
  } else {
    save_params(r.feature_net.params, (dir / "feature.igps").string());
    note(dir / "feature.igps");
  }
  if (cfg.train.reverse_probe) {
    save_params(r.reverse_encoder.params, (dir / "reverse_encoder.igps").string());
    note(dir / "reverse_encoder.igps");
    save_params(r.reverse_heads.params, (dir / "reverse_heads.igps").string());
    note(dir / "reverse_heads.igps");
  }
  // per-channel statistics the encoder was standardized with; the probe
  // command needs them to rebuild the same input transform
  ordered_json norm;
  norm["config_hash"] = hash;
  norm["channel_mean"] = ds.meta.channel_mean;
  norm["channel_std"] = ds.meta.channel_std;
  write_text(dir / "norm.json", norm.dump(2) + "\n");
  note(dir / "norm.json");
  write_text(dir / "config.json", canonical_config(cfg));
  note(dir / "config.json");

  if (r.log.aborted) {
    std::cerr << "train: numerical abort at step " << (r.log.last_good_step + 1) << "\n";
    return 2;
  }
  return 0;
}

int cmd_probe(const RunConfig& cfg) {
  const std::string hash = config_hash(cfg);
  Dataset ptr = load_dataset_checked(cfg.data.probe_train, "probe (train split)");
  Dataset pev = load_dataset_checked(cfg.data.probe_eval, "probe (eval split)");
  if (cfg.data.params.empty())
    throw std::runtime_error("probe: no --params IGPS file configured");
  if (!fs::exists(cfg.data.params))
    throw std::runtime_error("probe: params not found '" + cfg.data.params + "'");

  Rng rng(0);
  Encoder<float> enc = Encoder<float>::build(cfg.train.net, rng);
  enc.params.copy_values_from(load_params(cfg.data.params));

  const fs::path norm_path = fs::path(cfg.data.params).parent_path() / "norm.json";
  if (!fs::exists(norm_path))
    throw std::runtime_error("probe: normalization sidecar not found '" +
                             norm_path.string() + "'");
  std::ifstream nf(norm_path);
  ordered_json norm = ordered_json::parse(nf);
  enc.set_normalization(norm.at("channel_mean").get<std::vector<float>>(),
                        norm.at("channel_std").get<std::vector<float>>());

  const double acc = bc_probe(enc, cfg.train.net, ptr, pev, cfg.train.probe_steps,
                              cfg.train.probe_lr, cfg.train.probe_batch, cfg.seed);

  const fs::path dir = artifact_dir(cfg, "probe", hash);
  ordered_json out;
  out["config_hash"] = hash;
  out["accuracy"] = acc;
  out["train_records"] = ptr.records.size();
  out["eval_records"] = pev.records.size();
  write_text(dir / "probe.json", out.dump(2) + "\n");
  note(dir / "probe.json");
  std::cout << "probe accuracy " << acc << "\n";
  return 0;
}

int cmd_sweep(const RunConfig& cfg) {
  const std::string hash = config_hash(cfg);
  Dataset ds = load_dataset_checked(cfg.data.dataset, "sweep");
  Dataset ptr = load_dataset_checked(cfg.data.probe_train, "sweep (probe train)");
  Dataset pev = load_dataset_checked(cfg.data.probe_eval, "sweep (probe eval)");
  auto rows = lambda_sweep(cfg.train, ds, ptr, pev, cfg.sweep.lambdas, cfg.sweep.seeds, hash);

  std::ostringstream csv;
  csv << "lambda,seed,mean_gate,probe_accuracy\n";
  for (const SweepRow& r : rows)
    csv << num(r.lambda) << "," << r.seed << "," << num(r.mean_gate) << ","
        << num(r.probe_accuracy) << "\n";
  const fs::path dir = artifact_dir(cfg, "sweep", hash);
  write_text(dir / "sweep.csv", csv.str());
  note(dir / "sweep.csv");
  write_text(dir / "config.json", canonical_config(cfg));
  note(dir / "config.json");
  return 0;
}

int cmd_render_masks(const RunConfig& cfg) {
  const std::string hash = config_hash(cfg);
  if (cfg.train.gate.location != GateLocation::input)
    throw std::runtime_error("render-masks: feature-space gates have no pixel image");
  Dataset ds = load_dataset_checked(cfg.data.dataset, "render-masks");
  if (cfg.data.params.empty())
    throw std::runtime_error("render-masks: no --params IGPS file configured");
  if (!fs::exists(cfg.data.params))
    throw std::runtime_error("render-masks: params not found '" + cfg.data.params + "'");

  Rng rng(0);
  MaskNet<float> mask = MaskNet<float>::build(cfg.train.net, rng);
  mask.params.copy_values_from(load_params(cfg.data.params));

  const EnvConfig& env = ds.meta.env;
  const long hw = static_cast<long>(env.extent) * env.extent;
  const long obs_n = static_cast<long>(env.channels) * hw;
  const int N = std::min<int>(cfg.render_records, static_cast<int>(ds.records.size()));
  const fs::path dir = artifact_dir(cfg, "render-masks", hash);
  for (int i = 0; i < N; ++i) {
    Graph<float> g;
    ArrX<float> xv(obs_n);
    for (long p = 0; p < obs_n; ++p) xv[p] = ds.records[i].obs_t[p];
    auto m = mask.forward(g, g.constant({1, env.channels, env.extent, env.extent},
                                        std::move(xv)),
                          /*trainable=*/false);
    char name[32];
    std::snprintf(name, sizeof(name), "mask_%03d.pgm", i);
    render_mask_pgm(m.values().data(), env.extent, env.extent, (dir / name).string());
    note(dir / name);
    std::snprintf(name, sizeof(name), "overlay_%03d.ppm", i);
    render_overlay_ppm(ds.records[i].obs_t.data(), env.channels, env.extent, env.extent,
                       m.values().data(), (dir / name).string());
    note(dir / name);
  }
  write_text(dir / "config.json", canonical_config(cfg));
  note(dir / "config.json");
  return 0;
}

int cmd_gradcheck(int cases) {
  if (cases < 1) throw std::runtime_error("gradcheck: need at least 1 case");
  double worst = 0.0;
  std::string worst_desc;
  for (int i = 0; i < cases; ++i) {
    CompositeCase c = make_composite_case(static_cast<uint64_t>(i));
    GradCheckReport rep = finite_diff_check(c.loss, *c.params);
    if (rep.max_rel_err > worst) {
      worst = rep.max_rel_err;
      worst_desc = c.describe + " param " + rep.worst_param;
    }
  }
  std::printf("gradcheck: %d composite cases, max rel err %.3e (%s)\n", cases, worst,
              worst_desc.c_str());
  const bool ok = worst < 1e-5;
  std::printf("gradcheck: %s\n", ok ? "PASS" : "FAIL");
  return ok ? 0 : 2;
}

}  // namespace

int cli_run(const std::vector<std::string>& args) {
  CLI::App app{"InfoGating on DistractorDot: data, training, probes, masks"};
  app.require_subcommand(1);
  Overrides o;
  CLI::App* gen = app.add_subcommand("gen-data", "roll out and save a dataset");
  CLI::App* tr = app.add_subcommand("train", "train gates and encoder");
  CLI::App* pr = app.add_subcommand("probe", "score a frozen encoder with a BC probe");
  CLI::App* sw = app.add_subcommand("sweep", "train across a lambda grid");
  CLI::App* rm = app.add_subcommand("render-masks", "dump mask images for a dataset");
  CLI::App* gc = app.add_subcommand("gradcheck", "finite-difference self check");
  for (CLI::App* c : {gen, tr, pr, sw, rm}) add_common_options(c, o);
  gc->add_option("--cases", o.cases, "number of random composite cases");

  std::vector<std::string> argv = args;
  std::reverse(argv.begin(), argv.end());  // CLI11 consumes back to front
  try {
    app.parse(argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    if (gc->parsed()) return cmd_gradcheck(o.cases);
    const CLI::App* cmd = app.get_subcommands().front();
    const RunConfig cfg = resolve_config(cmd, o);
    if (gen->parsed()) return cmd_gen_data(cfg);
    if (tr->parsed()) return cmd_train(cfg);
    if (pr->parsed()) return cmd_probe(cfg);
    if (sw->parsed()) return cmd_sweep(cfg);
    if (rm->parsed()) return cmd_render_masks(cfg);
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace ig
