#pragma once

#include <string>

#include <json.hpp>

#include "vrkn/ad/adam.hpp"
#include "vrkn/ad/tape.hpp"

namespace vrkn::ad {

/// Checkpoint container (JSON):
///
///   {
///     "format": "vrkn-checkpoint/1",
///     "params": [ {"name": str, "shape": [rows, cols], "values": [row-major float64...]}, ... ],
///     "optimizer": null | {"step": int, "lr": f, "beta1": f, "beta2": f, "eps": f,
///                          "clip_norm": f | null,
///                          "moments": [ {"name": str, "m": [...], "v": [...]} ]},
///     "meta": { ... caller supplied ... }
///   }
///
/// Doubles are written with 17 significant digits, so values round-trip exactly.
nlohmann::json to_json(const ParamStore& store, const Adam* adam = nullptr, const nlohmann::json& meta = {});

/// Restores values (and optimizer state when `adam` is given) into an already
/// constructed store. Names and shapes must match exactly. Returns "meta".
nlohmann::json from_json(const nlohmann::json& doc, ParamStore& store, Adam* adam = nullptr);

void save_checkpoint(const std::string& path, const ParamStore& store, const Adam* adam = nullptr,
                     const nlohmann::json& meta = {});
nlohmann::json load_checkpoint(const std::string& path, ParamStore& store, Adam* adam = nullptr);

}  // namespace vrkn::ad
