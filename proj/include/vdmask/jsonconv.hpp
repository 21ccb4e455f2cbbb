#pragma once

#include <json.hpp>

#include "vdmask/data.hpp"
#include "vdmask/hardconcrete.hpp"
#include "vdmask/training.hpp"
#include "vdmask/vit.hpp"

namespace vdm {

inline void to_json(nlohmann::json& j, const ViTConfig& c) {
  j = {{"image_size", c.image_size}, {"patch_size", c.patch_size},
       {"channels", c.channels},     {"d_model", c.d_model},
       {"n_layers", c.n_layers},     {"n_heads", c.n_heads},
       {"mlp_ratio", c.mlp_ratio},   {"n_classes", c.n_classes}};
}

inline void from_json(const nlohmann::json& j, ViTConfig& c) {
  j.at("image_size").get_to(c.image_size);
  j.at("patch_size").get_to(c.patch_size);
  j.at("channels").get_to(c.channels);
  j.at("d_model").get_to(c.d_model);
  j.at("n_layers").get_to(c.n_layers);
  j.at("n_heads").get_to(c.n_heads);
  j.at("mlp_ratio").get_to(c.mlp_ratio);
  j.at("n_classes").get_to(c.n_classes);
}

inline void to_json(nlohmann::json& j, const HCParams& h) {
  j = {{"l", h.l}, {"r", h.r}, {"tau", h.tau}};
}

inline void from_json(const nlohmann::json& j, HCParams& h) {
  j.at("l").get_to(h.l);
  j.at("r").get_to(h.r);
  j.at("tau").get_to(h.tau);
}

inline void to_json(nlohmann::json& j, const GridSpec& g) {
  j = {{"grid_g", g.grid_g}, {"patch_px", g.patch_px}};
}

inline void from_json(const nlohmann::json& j, GridSpec& g) {
  j.at("grid_g").get_to(g.grid_g);
  j.at("patch_px").get_to(g.patch_px);
}

inline void to_json(nlohmann::json& j, const TrainConfig& t) {
  j = {{"lr_gates", t.lr_gates},
       {"lr_baseline", t.lr_baseline},
       {"lr_lambda", t.lr_lambda},
       {"margin", t.margin},
       {"lambda_init", t.lambda_init},
       {"epochs", t.epochs},
       {"batch_size", t.batch_size},
       {"lookahead_k", t.lookahead_k},
       {"lookahead_alpha", t.lookahead_alpha},
       {"guard_lambda_floor", t.guard_lambda_floor},
       {"guard_masked_hi", t.guard_masked_hi},
       {"guard_kl_factor", t.guard_kl_factor},
       {"guard_window", t.guard_window},
       {"guard_masked_lo", t.guard_masked_lo},
       {"guard_warmup_epochs", t.guard_warmup_epochs}};
}

inline void from_json(const nlohmann::json& j, TrainConfig& t) {
  j.at("lr_gates").get_to(t.lr_gates);
  j.at("lr_baseline").get_to(t.lr_baseline);
  j.at("lr_lambda").get_to(t.lr_lambda);
  j.at("margin").get_to(t.margin);
  j.at("lambda_init").get_to(t.lambda_init);
  j.at("epochs").get_to(t.epochs);
  j.at("batch_size").get_to(t.batch_size);
  j.at("lookahead_k").get_to(t.lookahead_k);
  j.at("lookahead_alpha").get_to(t.lookahead_alpha);
  if (j.contains("guard_lambda_floor")) j.at("guard_lambda_floor").get_to(t.guard_lambda_floor);
  if (j.contains("guard_masked_hi")) j.at("guard_masked_hi").get_to(t.guard_masked_hi);
  if (j.contains("guard_kl_factor")) j.at("guard_kl_factor").get_to(t.guard_kl_factor);
  if (j.contains("guard_window")) j.at("guard_window").get_to(t.guard_window);
  if (j.contains("guard_masked_lo")) j.at("guard_masked_lo").get_to(t.guard_masked_lo);
  if (j.contains("guard_warmup_epochs")) j.at("guard_warmup_epochs").get_to(t.guard_warmup_epochs);
}

inline void to_json(nlohmann::json& j, const VitTrainConfig& t) {
  j = {{"max_epochs", t.max_epochs}, {"batch_size", t.batch_size},
       {"lr", t.lr},                 {"weight_decay", t.weight_decay},
       {"patience", t.patience}};
}

inline void from_json(const nlohmann::json& j, VitTrainConfig& t) {
  j.at("max_epochs").get_to(t.max_epochs);
  j.at("batch_size").get_to(t.batch_size);
  j.at("lr").get_to(t.lr);
  j.at("weight_decay").get_to(t.weight_decay);
  j.at("patience").get_to(t.patience);
}

}  // namespace vdm
