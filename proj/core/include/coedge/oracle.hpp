#pragma once

#include <map>
#include <string>

#include <json.hpp>

#include "coedge/arch.hpp"

namespace coedge {

// Stand-in for supernet validation accuracy. Synthetic mode scores compute
// structure deterministically (mapping-invariant: Communicate placement never
// changes the value); table mode looks up a stored accuracy by the
// compute-only architecture hash.
class AccuracyOracle {
 public:
  enum class Mode { Synthetic, Table };

  static AccuracyOracle synthetic();
  static AccuracyOracle from_table(std::map<std::string, double> table);
  static AccuracyOracle from_table_json(const nlohmann::json& j);

  // Accuracy fraction in [0, 1]. Throws MissingAccuracyError in table mode
  // when the architecture is absent.
  double evaluate(const Architecture& arch) const;

  Mode mode() const { return mode_; }
  nlohmann::json table_to_json() const;

 private:
  Mode mode_ = Mode::Synthetic;
  std::map<std::string, double> table_;
};

}  // namespace coedge
