#include "coedge/search.hpp"

#include <algorithm>

#include "coedge/errors.hpp"
#include "coedge/json_util.hpp"
#include "coedge/rng.hpp"

namespace coedge {

double score_value(double accuracy, double latency_ms, double energy_j,
                   const SystemConfig& sys, double lambda) {
  const double norm_latency = latency_ms / sys.latency_constraint_ms;
  const double norm_energy = energy_j / sys.energy_constraint_j;
  return accuracy - lambda * (norm_latency + norm_energy);
}

bool dominates(const ScoredArch& a, const ScoredArch& b) {
  const bool no_worse = a.accuracy >= b.accuracy && a.latency_ms <= b.latency_ms &&
                        a.energy_j <= b.energy_j;
  const bool better = a.accuracy > b.accuracy || a.latency_ms < b.latency_ms ||
                      a.energy_j < b.energy_j;
  return no_worse && better;
}

namespace {

bool same_entry(const ScoredArch& a, const ScoredArch& b) {
  return a.hash == b.hash && a.accuracy == b.accuracy && a.latency_ms == b.latency_ms &&
         a.energy_j == b.energy_j;
}

// key returns true when a ranks strictly ahead of b; ties break by the other
// metrics and finally the hash so insertion order never matters.
template <typename Key>
void insert_bounded(std::vector<ScoredArch>& board, const ScoredArch& cand, int capacity,
                    Key ahead) {
  for (const auto& e : board) {
    if (same_entry(e, cand)) return;  // idempotent
  }
  auto pos = std::find_if(board.begin(), board.end(),
                          [&](const ScoredArch& e) { return ahead(cand, e); });
  board.insert(pos, cand);
  if (static_cast<int>(board.size()) > capacity) board.resize(capacity);
}

bool tie_break(const ScoredArch& a, const ScoredArch& b) {
  if (a.latency_ms != b.latency_ms) return a.latency_ms < b.latency_ms;
  if (a.energy_j != b.energy_j) return a.energy_j < b.energy_j;
  if (a.accuracy != b.accuracy) return a.accuracy > b.accuracy;
  return a.hash < b.hash;
}

}  // namespace

void ArchitectureZoo::update(const ScoredArch& cand) {
  insert_bounded(best_by_score_, cand, capacity_, [](const ScoredArch& a, const ScoredArch& b) {
    if (a.score != b.score) return a.score > b.score;
    return tie_break(a, b);
  });
  insert_bounded(best_by_latency_, cand, capacity_,
                 [](const ScoredArch& a, const ScoredArch& b) {
                   if (a.latency_ms != b.latency_ms) return a.latency_ms < b.latency_ms;
                   return tie_break(a, b);
                 });
  insert_bounded(best_by_energy_, cand, capacity_,
                 [](const ScoredArch& a, const ScoredArch& b) {
                   if (a.energy_j != b.energy_j) return a.energy_j < b.energy_j;
                   return tie_break(a, b);
                 });
  insert_bounded(best_by_accuracy_, cand, capacity_,
                 [](const ScoredArch& a, const ScoredArch& b) {
                   if (a.accuracy != b.accuracy) return a.accuracy > b.accuracy;
                   return tie_break(a, b);
                 });

  // Pareto set: drop the candidate if dominated, else evict what it dominates.
  for (const auto& e : pareto_) {
    if (same_entry(e, cand)) return;
    if (dominates(e, cand)) return;
  }
  pareto_.erase(std::remove_if(pareto_.begin(), pareto_.end(),
                               [&](const ScoredArch& e) { return dominates(cand, e); }),
                pareto_.end());
  auto pos = std::find_if(pareto_.begin(), pareto_.end(),
                          [&](const ScoredArch& e) { return tie_break(cand, e); });
  pareto_.insert(pos, cand);
}

std::vector<ScoredArch> ArchitectureZoo::all_members() const {
  std::vector<ScoredArch> out;
  auto absorb = [&](const std::vector<ScoredArch>& v) {
    for (const auto& e : v) {
      if (std::none_of(out.begin(), out.end(),
                       [&](const ScoredArch& o) { return o.hash == e.hash; })) {
        out.push_back(e);
      }
    }
  };
  absorb(best_by_score_);
  absorb(best_by_latency_);
  absorb(best_by_energy_);
  absorb(best_by_accuracy_);
  absorb(pareto_);
  std::sort(out.begin(), out.end(),
            [](const ScoredArch& a, const ScoredArch& b) { return a.hash < b.hash; });
  return out;
}

namespace {

struct Evaluation {
  double latency_ms;
  double energy_j;
  PerfReport report;
};

Evaluation evaluate_arch(const Architecture& arch, const SystemConfig& sys,
                         const LatencyLUT& lut, EvaluatorKind kind,
                         const PredictorModel* predictor) {
  Evaluation ev;
  ev.report = estimate_cost(arch, sys, lut);
  ev.energy_j = ev.report.energy_device_j;
  if (kind == EvaluatorKind::Predictor) {
    ev.latency_ms = forward(*predictor, build_graph(arch, sys, lut));
  } else {
    ev.latency_ms = ev.report.total_latency_ms;
  }
  return ev;
}

ScoredArch make_scored(Architecture arch, double accuracy, const Evaluation& ev,
                       const SystemConfig& sys, double lambda) {
  ScoredArch s;
  s.accuracy = accuracy;
  s.latency_ms = ev.latency_ms;
  s.energy_j = ev.energy_j;
  s.score = score_value(accuracy, ev.latency_ms, ev.energy_j, sys, lambda);
  s.hash = arch_digest(arch);
  s.device_compute_ms = ev.report.device_compute_ms;
  s.edge_compute_ms = ev.report.edge_compute_ms;
  s.comm_ms = ev.report.comm_ms;
  s.arch = std::move(arch);
  return s;
}

}  // namespace

SearchResult search(const SpaceConfig& space, const SystemConfig& sys, const LatencyLUT& lut,
                    const AccuracyOracle& oracle, const SearchConfig& cfg,
                    const PredictorModel* predictor) {
  if (cfg.evaluator == EvaluatorKind::Predictor && predictor == nullptr) {
    throw DimensionError("search: predictor evaluator selected without a model");
  }

  SearchResult result{ArchitectureZoo(cfg.zoo_capacity), {}, false};
  Rng rng(cfg.seed);

  // Stage 1: operation search under constraints.
  for (int t = 0; t < cfg.max_iterations; ++t) {
    ++result.stats.iterations;
    Architecture arch;
    bool found = false;
    for (int attempt = 0; attempt < cfg.max_rejection_attempts; ++attempt) {
      arch = sample_random(space, rng);
      ++result.stats.samples_drawn;
      if (check_validity(arch).empty()) {
        found = true;
        break;
      }
    }
    if (!found) {
      ++result.stats.rejection_exhausted;
      continue;
    }

    const Evaluation ev = evaluate_arch(arch, sys, lut, cfg.evaluator, predictor);
    if (!(ev.latency_ms < sys.latency_constraint_ms && ev.energy_j < sys.energy_constraint_j)) {
      ++result.stats.constraint_failures;  // score -1, discarded
      continue;
    }
    const double accuracy = oracle.evaluate(arch);
    result.zoo.update(make_scored(std::move(arch), accuracy, ev, sys, cfg.lambda));
  }

  // Stage 2: function scale-down tuning of the incumbent best-by-score.
  for (int t = 0; t < cfg.tuning_iterations; ++t) {
    if (result.zoo.best_by_score().empty()) break;
    const ScoredArch& incumbent = result.zoo.best_by_score().front();
    Architecture shrunk = scale_down(incumbent.arch, space, rng);
    if (shrunk == incumbent.arch) continue;  // nothing left to shrink

    const Evaluation ev = evaluate_arch(shrunk, sys, lut, cfg.evaluator, predictor);
    if (!(ev.latency_ms < sys.latency_constraint_ms && ev.energy_j < sys.energy_constraint_j)) {
      continue;
    }
    const double accuracy = oracle.evaluate(shrunk);
    if (incumbent.accuracy - accuracy > cfg.stage2_accuracy_drop) continue;
    result.zoo.update(make_scored(std::move(shrunk), accuracy, ev, sys, cfg.lambda));
    ++result.stats.stage2_accepted;
  }

  result.empty_zoo = result.zoo.empty();
  return result;
}

// --- serialization ---

static json scored_to_json(const ScoredArch& s) {
  return json{{"arch", arch_to_json(s.arch)},
              {"accuracy", s.accuracy},
              {"latency_ms", s.latency_ms},
              {"energy_j", s.energy_j},
              {"score", s.score},
              {"hash", s.hash},
              {"device_compute_ms", s.device_compute_ms},
              {"edge_compute_ms", s.edge_compute_ms},
              {"comm_ms", s.comm_ms}};
}

static ScoredArch scored_from_json(const json& j) {
  ScoredArch s;
  s.arch = arch_from_json(require_field(j, "arch", "zoo entry"));
  s.accuracy = require_field(j, "accuracy", "zoo entry").get<double>();
  s.latency_ms = require_field(j, "latency_ms", "zoo entry").get<double>();
  s.energy_j = require_field(j, "energy_j", "zoo entry").get<double>();
  s.score = require_field(j, "score", "zoo entry").get<double>();
  s.hash = require_field(j, "hash", "zoo entry").get<std::string>();
  s.device_compute_ms = require_field(j, "device_compute_ms", "zoo entry").get<double>();
  s.edge_compute_ms = require_field(j, "edge_compute_ms", "zoo entry").get<double>();
  s.comm_ms = require_field(j, "comm_ms", "zoo entry").get<double>();
  return s;
}

static json board_to_json(const std::vector<ScoredArch>& board) {
  json arr = json::array();
  for (const auto& e : board) arr.push_back(scored_to_json(e));
  return arr;
}

nlohmann::json zoo_to_json(const SearchResult& result, const SystemConfig& sys,
                           const SearchConfig& cfg) {
  return json{{"system", system_to_json(sys)},
              {"lambda", cfg.lambda},
              {"seed", cfg.seed},
              {"zoo_capacity", cfg.zoo_capacity},
              {"empty_zoo", result.empty_zoo},
              {"best_by_score", board_to_json(result.zoo.best_by_score())},
              {"best_by_latency", board_to_json(result.zoo.best_by_latency())},
              {"best_by_energy", board_to_json(result.zoo.best_by_energy())},
              {"best_by_accuracy", board_to_json(result.zoo.best_by_accuracy())},
              {"pareto", board_to_json(result.zoo.pareto())},
              {"stats",
               {{"iterations", result.stats.iterations},
                {"constraint_failures", result.stats.constraint_failures},
                {"rejection_exhausted", result.stats.rejection_exhausted},
                {"samples_drawn", result.stats.samples_drawn},
                {"stage2_accepted", result.stats.stage2_accepted}}}};
}

SearchResult zoo_from_json(const nlohmann::json& j, SystemConfig* sys_out) {
  if (sys_out) *sys_out = system_from_json(require_field(j, "system", "zoo"));
  SearchResult result{ArchitectureZoo(j.value("zoo_capacity", 5)), {}, false};
  result.empty_zoo = j.value("empty_zoo", false);

  // Rebuild through update() so invariants hold regardless of file order.
  for (const char* key : {"best_by_score", "best_by_latency", "best_by_energy",
                          "best_by_accuracy", "pareto"}) {
    for (const auto& e : require_field(j, key, "zoo")) {
      result.zoo.update(scored_from_json(e));
    }
  }
  if (j.contains("stats")) {
    const json& st = j["stats"];
    result.stats.iterations = st.value("iterations", 0);
    result.stats.constraint_failures = st.value("constraint_failures", 0);
    result.stats.rejection_exhausted = st.value("rejection_exhausted", 0);
    result.stats.samples_drawn = st.value("samples_drawn", static_cast<int64_t>(0));
    result.stats.stage2_accepted = st.value("stage2_accepted", 0);
  }
  return result;
}

}  // namespace coedge
