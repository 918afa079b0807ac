#pragma once

// Training driver: builds the nets, iterates optimizer steps over dataset
// batches, logs per-step scalars and periodic mask evaluations, and runs
// post-hoc probes. Everything is float; gradients were validated against the
// double oracle in the core tests.

#include <cstdint>
#include <string>
#include <vector>

#include "ig/gating/gating.hpp"
#include "ig/nets/nets.hpp"
#include "ig/objectives/losses.hpp"
#include "ig/world/dataset.hpp"

namespace ig {

enum class Objective { inverse, forward, td, bc, simsiam };

std::string objective_name(Objective o);
Objective objective_from_name(const std::string& name);

struct TrainConfig {
  Objective objective = Objective::inverse;
  GateConfig gate;
  NetConfig net;
  int batch = 128;
  long steps = 2000;
  long eval_interval = 200;
  int eval_records = 256;     // dataset slice used for mask evaluation
  double lr_encoder = 1e-4;
  double lr_mask = 1e-4;
  double gamma = 0.99;        // TD discount
  long target_sync = 200;     // hard target-net sync period
  int crop_pad = 4;           // random-shift augmentation padding
  bool reverse_probe = false; // adversarial: train a second encoder on 1-gate
  long probe_steps = 2000;
  double probe_lr = 1e-3;
  int probe_batch = 128;
};

struct MaskReport {
  double mean_gate = 1.0;
  double gate_relevant = 1.0;    // mean gate over ground-truth relevant pixels
  double gate_background = 1.0;  // mean gate elsewhere
  double selectivity = 1.0;      // relevant / background, capped at 1e6
  double iou = 0.0;              // gates > 0.5 vs relevance
};

struct StepRecord {
  long step = 0;
  double lambda = 0.0;
  double task = 0.0;
  double penalty = 0.0;
  double mean_gate = 1.0;
};

struct EvalRecord {
  long step = 0;
  MaskReport report;
};

struct RunLog {
  uint64_t seed = 0;
  std::string config_hash;
  std::string objective;
  std::vector<StepRecord> steps;
  std::vector<EvalRecord> evals;
  double probe_accuracy = -1.0;          // -1 while not measured
  double reverse_probe_accuracy = -1.0;
  bool aborted = false;
  long last_good_step = -1;
};

struct TrainResult {
  MaskNet<float> mask_net;
  FeatureGateNet<float> feature_net;
  Encoder<float> encoder;
  Heads<float> heads;
  Encoder<float> reverse_encoder;  // populated when reverse_probe is on
  Heads<float> reverse_heads;
  RunLog log;
};

TrainResult train(const TrainConfig& cfg, const Dataset& ds, uint64_t seed,
                  const std::string& config_hash = "");

// Pixel-level gate quality against ground-truth relevance, accumulated over
// records. Exposed so the threshold arithmetic is testable on crafted maps.
struct OverlapStats {
  double gate_sum = 0.0, rel_gate_sum = 0.0, bg_gate_sum = 0.0;
  long n = 0, rel_n = 0, bg_n = 0;
  long tp = 0, fp = 0, fn = 0;

  void add(const float* gate, const uint8_t* rel, long count, double threshold = 0.5);
  MaskReport report() const;
};

// Evaluates gates over the first `max_records` records of `ds` (raw
// observations, no augmentation). A null mask net means all-open gates, which
// is also the path ungated baselines log. The rng drives the random-baseline
// mask when that mode is active.
MaskReport eval_masks(const TrainConfig& cfg, MaskNet<float>* mask_net, const Dataset& ds,
                      int max_records, Rng& rng);

// Trains a fresh two-layer softmax head on fixed feature rows ([N*dim] flat,
// row-major) and returns argmax accuracy on the eval rows. Backbone of
// bc_probe, exposed so probe behaviour is testable on crafted features.
double fit_probe_head(const ArrX<float>& train_features, const std::vector<int>& train_labels,
                      const ArrX<float>& eval_features, const std::vector<int>& eval_labels,
                      int dim, int hidden, int actions, long steps, double lr, int batch,
                      uint64_t seed);

// Behaviour-cloning probe: freezes the encoder, trains a fresh two-layer head
// on raw-observation features against expert actions reconstructed from the
// stored relevance maps, and returns eval accuracy in [0,1].
double bc_probe(Encoder<float>& encoder, const NetConfig& net_cfg, const Dataset& probe_train,
                const Dataset& probe_eval, long steps, double lr, int batch, uint64_t seed);

// Expert label for a stored record (fixed goal at the image centre).
int expert_label_for_record(const Transition& tr, const EnvConfig& env);

struct SweepRow {
  double lambda = 0.0;
  uint64_t seed = 0;
  double mean_gate = 1.0;
  double probe_accuracy = 0.0;
};

// Trains one run per (lambda, seed) with a constant-lambda schedule and
// reports final mean gate plus probe accuracy. Rows are ordered by lambda
// first (input order preserved), then seed.
std::vector<SweepRow> lambda_sweep(const TrainConfig& base, const Dataset& train_ds,
                                   const Dataset& probe_train, const Dataset& probe_eval,
                                   const std::vector<double>& lambdas,
                                   const std::vector<uint64_t>& seeds,
                                   const std::string& config_hash = "");

// --- run log I/O ----------------------------------------------------------

// JSONL: one header line, then step / eval / probe / abort records in order.
void write_runlog(const RunLog& log, const std::string& path);
RunLog read_runlog(const std::string& path);

}  // namespace ig
