#pragma once

#include "poison/evaluation.hpp"
#include "poison/feasible_set.hpp"
#include "poison/influence_attack.hpp"
#include "poison/kkt_attack.hpp"
#include "poison/minmax_attack.hpp"

#include <json.hpp>

#include <filesystem>
#include <string>
#include <vector>

namespace poison {

using Json = nlohmann::json;

Json model_to_json(const ModelParams& model);
ModelParams model_from_json(const Json& j);

/// {"d", "domain", "points": [{"x", "y", "w"}]}
Json points_to_json(const Dataset& data);
Dataset points_from_json(const Json& j);

Json result_to_json(const AttackResult& result);
AttackResult result_from_json(const Json& j);
/// One row per defense: attack,epsilon,defense,p,tau_minus,tau_plus,removed_clean,removed_poison,test_error.
std::string result_to_csv(const AttackResult& result);

Json decoys_to_json(const std::vector<DecoyParams>& decoys);
std::vector<DecoyParams> decoys_from_json(const Json& j);

Json feasible_to_json(const FeasibleSet& set);
FeasibleSet feasible_from_json(const Json& j);

std::string influence_trace_csv(const std::vector<InfluenceTraceRow>& rows);
std::string minmax_trace_csv(const std::vector<MinMaxTraceRow>& rows);

Json read_json(const std::filesystem::path& path);
void write_text(const std::filesystem::path& path, const std::string& text);
void write_json(const std::filesystem::path& path, const Json& j);

}  // namespace poison
