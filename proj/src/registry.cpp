#include "wmobs/registry.hpp"

#include <set>

#include "wmobs/error.hpp"

namespace wmobs {

std::string to_string(DeploymentMode mode) {
  switch (mode) {
    case DeploymentMode::PerEntity: return "PER_ENTITY";
    case DeploymentMode::Shared: return "SHARED";
    case DeploymentMode::None: return "NONE";
  }
  return "?";
}

DeploymentMode deployment_from_string(const std::string& name) {
  if (name == "PER_ENTITY") return DeploymentMode::PerEntity;
  if (name == "SHARED") return DeploymentMode::Shared;
  if (name == "NONE") return DeploymentMode::None;
  throw Error(ErrorCode::InvalidSpec, "unknown deployment mode '" + name + "'");
}

void EntityRegistry::validate() const {
  if (n_entities < 1) throw Error(ErrorCode::InvalidSpec, "registry needs at least one entity");
  switch (mode) {
    case DeploymentMode::None:
      if (!keys.empty()) throw Error(ErrorCode::InvalidSpec, "NONE registry must hold no keys");
      return;
    case DeploymentMode::Shared:
      if (static_cast<int>(keys.size()) != n_entities)
        throw Error(ErrorCode::InvalidSpec, "one key per entity required");
      for (const auto& k : keys)
        if (!(k == keys.front())) throw Error(ErrorCode::InvalidSpec, "SHARED keys must be equal");
      return;
    case DeploymentMode::PerEntity: {
      if (static_cast<int>(keys.size()) != n_entities)
        throw Error(ErrorCode::InvalidSpec, "one key per entity required");
      std::set<std::uint64_t> seen;
      for (const auto& k : keys)
        if (!seen.insert(k.value).second)
          throw Error(ErrorCode::InvalidSpec, "PER_ENTITY keys must be pairwise distinct");
      return;
    }
  }
}

EntityRegistry assign_keys(int n, DeploymentMode mode, std::uint64_t master_seed) {
  if (n < 1) throw Error(ErrorCode::InvalidCount, "need at least one entity");
  EntityRegistry reg;
  reg.n_entities = n;
  reg.mode = mode;
  reg.master_seed = master_seed;
  switch (mode) {
    case DeploymentMode::PerEntity:
      for (int e = 0; e < n; ++e) reg.keys.push_back(WatermarkKey{splitmix64(master_seed ^ fnv1a64({e}))});
      break;
    case DeploymentMode::Shared:
      reg.keys.assign(static_cast<std::size_t>(n), WatermarkKey{splitmix64(master_seed)});
      break;
    case DeploymentMode::None:
      break;
  }
  reg.validate();
  return reg;
}

DetectorBank detector_bank(const EntityRegistry& registry, const SchemeConfig& cfg) {
  if (registry.mode == DeploymentMode::None) throw Error(ErrorCode::NoKeys, "NONE deployment has no keys");
  DetectorBank bank;
  bank.reserve(registry.keys.size());
  if (registry.mode == DeploymentMode::Shared && !registry.keys.empty()) {
    // Equal keys: build the green table once and copy the detector.
    Detector d(registry.keys.front(), cfg);
    bank.assign(registry.keys.size(), d);
    return bank;
  }
  for (const auto& k : registry.keys) bank.emplace_back(k, cfg);
  return bank;
}

}  // namespace wmobs
