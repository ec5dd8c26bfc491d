#ifndef SLFV_CHECKPOINT_HPP
#define SLFV_CHECKPOINT_HPP

#include "slfv/simulator.hpp"

#include <json.hpp>

#include <cstdint>
#include <string>
#include <vector>

namespace slfv {

nlohmann::json params_to_json(const SlfvParams& p);
SlfvParams params_from_json(const nlohmann::json& j);

/// Binary (CBOR) dump of params, seed, clock, RNG state, pending event and every site.
std::vector<std::uint8_t> checkpoint_bytes(const Simulation& sim);
Simulation restore_checkpoint(const std::vector<std::uint8_t>& bytes);

void save_checkpoint(const Simulation& sim, const std::string& path);
Simulation load_checkpoint(const std::string& path);

}  // namespace slfv

#endif
