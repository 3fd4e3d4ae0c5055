#pragma once

#include <string>
#include <variant>

#include "json.hpp"
#include "gittins_lab/chain.hpp"
#include "gittins_lab/queueing.hpp"
#include "gittins_lab/selection.hpp"

namespace gittins_lab {

using Json = nlohmann::json;

// Longhand chain:
//   {"states": [...], "terminal": [...], "transitions": {"s": [["t", p], ...]},
//    "rewards": {"s": r}, "discount": 1.0, "initial": "s"}
// Longhand MDP arm: as above with "actions": {"s": [{"label", "reward", "next"}]}
// in place of transitions and rewards.
// Shorthands: pandora, open, optional_box, two_stage, beta, job.

/// Parses one arm; `where` names it in diagnostics.
BoxMdpModel arm_from_json(const Json& j, const std::string& where = "chain");
MarkovChainModel chain_from_json(const Json& j, const std::string& where = "chain");

Json to_json(const MarkovChainModel& chain);
/// Arms whose every action is the chain wrapper's "go" are written as chains.
Json to_json(const BoxMdpModel& arm);
Json to_json(const McsInstance& inst);

McsInstance instance_from_json(const Json& j);

Json to_json(const QueueModel& model);
QueueModel queue_from_json(const Json& j);

using LoadedInstance = std::variant<McsInstance, QueueModel>;

/// Reads a file holding either {"chains": ...} or {"queue": ...}. Syntax and
/// shape problems raise ParseError, model rejections raise ValidationError
/// carrying the underlying diagnostic.
LoadedInstance load_instance(const std::string& path);
McsInstance load_mcs_instance(const std::string& path);
QueueModel load_queue_model(const std::string& path);

}  // namespace gittins_lab
