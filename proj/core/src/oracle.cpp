#include "coedge/oracle.hpp"

#include <algorithm>
#include <cmath>

#include "coedge/errors.hpp"
#include "coedge/json_util.hpp"

namespace coedge {

AccuracyOracle AccuracyOracle::synthetic() { return AccuracyOracle{}; }

AccuracyOracle AccuracyOracle::from_table(std::map<std::string, double> table) {
  AccuracyOracle o;
  o.mode_ = Mode::Table;
  o.table_ = std::move(table);
  return o;
}

AccuracyOracle AccuracyOracle::from_table_json(const nlohmann::json& j) {
  if (!j.is_object()) throw JsonSchemaError("accuracy table must be a JSON object");
  std::map<std::string, double> table;
  for (auto it = j.begin(); it != j.end(); ++it) {
    const double acc = it.value().get<double>();
    if (acc < 0.0 || acc > 1.0) {
      throw JsonSchemaError("accuracy table values must be in [0, 1]");
    }
    table[it.key()] = acc;
  }
  return from_table(std::move(table));
}

double AccuracyOracle::evaluate(const Architecture& arch) const {
  if (mode_ == Mode::Table) {
    auto it = table_.find(arch_hash_compute(arch));
    if (it == table_.end()) {
      throw MissingAccuracyError("no accuracy entry for architecture " +
                                 arch_hash_compute(arch));
    }
    return it->second;
  }

  // Fixed surrogate: aggregation and width help, dead Identity layers hurt.
  bool has_aggregate = false;
  bool has_sample = false;
  int identity_count = 0;
  int max_combine = 0;
  for (const auto& l : arch.layers) {
    switch (l.op) {
      case OpKind::Aggregate:
        has_aggregate = true;
        break;
      case OpKind::Sample:
        has_sample = true;
        break;
      case OpKind::Identity:
        ++identity_count;
        break;
      case OpKind::Combine:
        max_combine = std::max(max_combine, l.setting.combine_out_dim);
        break;
      default:
        break;
    }
  }
  const bool graph_used = has_sample || (arch.input.has_input_graph && has_aggregate);
  double acc = 0.5;
  if (has_aggregate) acc += 0.1;
  if (graph_used) acc += 0.08;
  if (max_combine > 0) acc += 0.05 * std::log2(static_cast<double>(max_combine)) / 8.0;
  acc -= 0.02 * identity_count;
  return std::clamp(acc, 0.0, 0.95);
}

nlohmann::json AccuracyOracle::table_to_json() const {
  json j = json::object();
  for (const auto& [k, v] : table_) j[k] = v;
  return j;
}

}  // namespace coedge
