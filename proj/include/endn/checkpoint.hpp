#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include <json.hpp>

#include "endn/model.hpp"
#include "endn/optim.hpp"

namespace endn {

// Binary container: magic "ENDN", version u32=1, length-prefixed UTF-8 JSON
// config document, named f32 tensor table, optional Adam state table in the
// same format, trailing CRC32 (IEEE) of all preceding bytes. Little-endian
// throughout; biases are written ndim=1. load(save(x)) is bit-exact.
struct Checkpoint {
  nlohmann::json config;  // {"model": {...}, "train": {"step": N, "lr": ...}}
  ModelParamsF params;
  std::optional<AdamStateF> adam;

  ModelConfig model_config() const;
  std::int64_t step() const;  // 0 if absent
};

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

Checkpoint make_checkpoint(const ModelConfig& cfg, const ModelParamsF& params,
                           const AdamStateF* adam, std::int64_t step);

// ModelConfig <-> JSON
nlohmann::json config_to_json(const ModelConfig& cfg);
ModelConfig config_from_json(const nlohmann::json& j);

}  // namespace endn
