#pragma once

#include <cstdint>

#include "slt/core/errors.hpp"
#include "slt/core/json_util.hpp"

namespace slt::model {

struct ModelConfig {
  int ny = 256;          // physical profile length
  int latent_dim = 64;   // D_M
  int channels = 4;      // hidden TEPC channels
  int history = 10;      // S
  int heads = 4;
  int blocks = 3;
  int ff_hidden = 0;     // 0 -> 2 * latent_dim
  int head_hidden = 0;   // 0 -> 2 * latent_dim
  bool layer_norm = false;  // pre-norm blocks plus a norm before the head
  std::uint64_t init_seed = 0;

  int ff_width() const { return ff_hidden > 0 ? ff_hidden : 2 * latent_dim; }
  int head_width() const { return head_hidden > 0 ? head_hidden : 2 * latent_dim; }

  void validate() const {
    auto even_pos = [](int v) { return v > 0 && v % 2 == 0; };
    if (!even_pos(ny)) throw ConfigError("model.ny must be positive and even");
    if (!even_pos(latent_dim) || latent_dim < 4) throw ConfigError("model.latent_dim must be even and >= 4");
    if (latent_dim > ny) throw ConfigError("model.latent_dim must not exceed model.ny");
    if (channels < 1 || history < 1 || blocks < 1 || heads < 1)
      throw ConfigError("model: channels, history, blocks and heads must be >= 1");
    if (latent_dim % heads) throw ConfigError("model.latent_dim must be divisible by model.heads");
  }
};

inline ModelConfig desk_model_config() {
  ModelConfig c;
  c.ny = 64;
  c.latent_dim = 32;
  c.layer_norm = true;  // keeps short desk training stable in long rollouts
  return c;
}

inline void to_json(json& j, const ModelConfig& c) {
  j = json{{"ny", c.ny},           {"latent_dim", c.latent_dim}, {"channels", c.channels},
           {"history", c.history}, {"heads", c.heads},           {"blocks", c.blocks},
           {"ff_hidden", c.ff_hidden}, {"head_hidden", c.head_hidden}, {"layer_norm", c.layer_norm},
           {"init_seed", c.init_seed}};
}

inline void from_json(const json& j, ModelConfig& c) {
  check_keys(j, {"ny", "latent_dim", "channels", "history", "heads", "blocks", "ff_hidden", "head_hidden", "layer_norm", "init_seed"},
             "model");
  read_opt(j, "ny", c.ny, "model");
  read_opt(j, "latent_dim", c.latent_dim, "model");
  read_opt(j, "channels", c.channels, "model");
  read_opt(j, "history", c.history, "model");
  read_opt(j, "heads", c.heads, "model");
  read_opt(j, "blocks", c.blocks, "model");
  read_opt(j, "ff_hidden", c.ff_hidden, "model");
  read_opt(j, "head_hidden", c.head_hidden, "model");
  read_opt(j, "layer_norm", c.layer_norm, "model");
  read_opt(j, "init_seed", c.init_seed, "model");
}

}  // namespace slt::model
