#pragma once

#include <json.hpp>
#include <string>

#include "gmje/gng.hpp"
#include "gmje/mixture.hpp"
#include "gmje/neural.hpp"

namespace gmje {

using nlohmann::json;

/// JSON round-trip helpers for the trainable model types. Matrices are stored
/// as nested row-major arrays; doubles keep full precision through nlohmann's
/// shortest-round-trip formatting, so save/load/save is byte-identical.

json matrix_to_json(const MatrixXd& m);
MatrixXd matrix_from_json(const json& j);
json vector_to_json(const VectorXd& v);
VectorXd vector_from_json(const json& j);

json mixture_to_json(const JointMixture& mix);
JointMixture mixture_from_json(const json& j);

json mlp_to_json(const Mlp& net);
Mlp mlp_from_json(const json& j);

json mdn_to_json(const MdnModel& model);
MdnModel mdn_from_json(const json& j);

json gng_to_json(const GngGraph& graph);
/// Rebuilds the prototype graph as a plain node/edge snapshot (step counters
/// and instrumentation restart at zero).
GngGraph gng_from_json(const json& j);

void write_json(const json& j, const std::string& path);
json read_json(const std::string& path);

}  // namespace gmje
