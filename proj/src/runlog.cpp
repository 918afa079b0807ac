#include <fstream>
#include <limits>
#include <stdexcept>

#include "ig/train/trainer.hpp"
#include "json.hpp"

namespace ig {

using ordered_json = nlohmann::ordered_json;

// One JSON object per line, chronological: header, then step records with
// eval records spliced in after the step that triggered them, then probe
// accuracies, then the abort marker if the run died.
void write_runlog(const RunLog& log, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("write_runlog: cannot open '" + path + "'");

  ordered_json header;
  header["type"] = "header";
  header["seed"] = log.seed;
  header["config_hash"] = log.config_hash;
  header["objective"] = log.objective;
  out << header.dump() << "\n";

  size_t ei = 0;
  auto emit_evals_upto = [&](long step_exclusive) {
    for (; ei < log.evals.size() && log.evals[ei].step <= step_exclusive; ++ei) {
      const EvalRecord& ev = log.evals[ei];
      ordered_json j;
      j["type"] = "eval";
      j["step"] = ev.step;
      j["mean_gate"] = ev.report.mean_gate;
      j["gate_relevant"] = ev.report.gate_relevant;
      j["gate_background"] = ev.report.gate_background;
      j["selectivity"] = ev.report.selectivity;
      j["iou"] = ev.report.iou;
      out << j.dump() << "\n";
    }
  };
  for (const StepRecord& s : log.steps) {
    ordered_json j;
    j["type"] = "step";
    j["step"] = s.step;
    j["lambda"] = s.lambda;
    j["task"] = s.task;
    j["penalty"] = s.penalty;
    j["mean_gate"] = s.mean_gate;
    out << j.dump() << "\n";
    emit_evals_upto(s.step + 1);
  }
  emit_evals_upto(std::numeric_limits<long>::max());

  if (log.probe_accuracy >= 0.0) {
    ordered_json j;
    j["type"] = "probe";
    j["accuracy"] = log.probe_accuracy;
    out << j.dump() << "\n";
  }
  if (log.reverse_probe_accuracy >= 0.0) {
    ordered_json j;
    j["type"] = "reverse_probe";
    j["accuracy"] = log.reverse_probe_accuracy;
    out << j.dump() << "\n";
  }
  if (log.aborted) {
    ordered_json j;
    j["type"] = "abort";
    j["last_good_step"] = log.last_good_step;
    out << j.dump() << "\n";
  }
  if (!out) throw std::runtime_error("write_runlog: write failed for '" + path + "'");
}

RunLog read_runlog(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("read_runlog: cannot open '" + path + "'");
  RunLog log;
  std::string line;
  long lineno = 0;
  bool saw_header = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    ordered_json j;
    try {
      j = ordered_json::parse(line);
    } catch (const std::exception& e) {
      throw std::runtime_error("read_runlog: bad JSON at line " + std::to_string(lineno) +
                               ": " + e.what());
    }
    const std::string type = j.at("type").get<std::string>();
    if (type == "header") {
      log.seed = j.at("seed").get<uint64_t>();
      log.config_hash = j.at("config_hash").get<std::string>();
      log.objective = j.at("objective").get<std::string>();
      saw_header = true;
    } else if (type == "step") {
      StepRecord s;
      s.step = j.at("step").get<long>();
      s.lambda = j.at("lambda").get<double>();
      s.task = j.at("task").get<double>();
      s.penalty = j.at("penalty").get<double>();
      s.mean_gate = j.at("mean_gate").get<double>();
      log.steps.push_back(s);
    } else if (type == "eval") {
      EvalRecord ev;
      ev.step = j.at("step").get<long>();
      ev.report.mean_gate = j.at("mean_gate").get<double>();
      ev.report.gate_relevant = j.at("gate_relevant").get<double>();
      ev.report.gate_background = j.at("gate_background").get<double>();
      ev.report.selectivity = j.at("selectivity").get<double>();
      ev.report.iou = j.at("iou").get<double>();
      log.evals.push_back(ev);
    } else if (type == "probe") {
      log.probe_accuracy = j.at("accuracy").get<double>();
    } else if (type == "reverse_probe") {
      log.reverse_probe_accuracy = j.at("accuracy").get<double>();
    } else if (type == "abort") {
      log.aborted = true;
      log.last_good_step = j.at("last_good_step").get<long>();
    } else {
      throw std::runtime_error("read_runlog: unknown record type '" + type + "' at line " +
                               std::to_string(lineno));
    }
  }
  if (!saw_header) throw std::runtime_error("read_runlog: missing header in '" + path + "'");
  return log;
}

}  // namespace ig
