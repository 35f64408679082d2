#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "mzi/evolution.hpp"
#include "mzi/histories.hpp"
#include "mzi/weaktrace.hpp"

namespace mzi {

/// Shortest fixed-rule rendering used everywhere numbers leave the process:
/// printf %.17g (17 significant digits round-trip any double).
std::string fmt17(double v);

uint64_t fnv1a64(std::string_view text);

/// Digest of a canonical key=value option listing (sorted by key), hex.
std::string config_digest(std::vector<std::pair<std::string, std::string>> options);

/// Serialize with doubles rendered via fmt17 (nlohmann's default shortest
/// round-trip form varies in width; reports pin 17 significant digits).
std::string dump_json17(const nlohmann::ordered_json& doc, int indent = 2);

nlohmann::ordered_json distribution_json(const OutcomeDistribution& dist);
nlohmann::ordered_json histories_json(const ConsistencyReport& report,
                                      const std::map<std::string, std::map<std::string, double>>& conditionals);
nlohmann::ordered_json weak_table_json(const WeakValueTable& table);
nlohmann::ordered_json comparison_json(const ComparisonReport& report);

}  // namespace mzi
