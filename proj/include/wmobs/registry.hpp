#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "wmobs/schemes.hpp"

namespace wmobs {

enum class DeploymentMode { PerEntity, Shared, None };

std::string to_string(DeploymentMode mode);
DeploymentMode deployment_from_string(const std::string& name);

/// Entities 0..n-1 and their keys. Keys are derived from `master_seed`; a
/// production deployment would hold independent secrets instead.
struct EntityRegistry {
  int n_entities = 0;
  DeploymentMode mode = DeploymentMode::PerEntity;
  std::vector<WatermarkKey> keys;  // indexed by entity id; empty for None
  std::uint64_t master_seed = 0;

  /// Throws InvalidSpec when the mode invariants do not hold.
  void validate() const;

  bool operator==(const EntityRegistry&) const = default;
};

EntityRegistry assign_keys(int n, DeploymentMode mode, std::uint64_t master_seed);

/// One detector per entity, in entity-id order.
using DetectorBank = std::vector<Detector>;

DetectorBank detector_bank(const EntityRegistry& registry, const SchemeConfig& cfg);

}  // namespace wmobs
