#pragma once

#include "gdir/synthetic.hpp"
#include "gdir/trainer.hpp"

#include <map>
#include <string>

namespace gdir {

// Named hyperparameter recipes selectable from the CLI.
TrainConfig train_preset(const std::string& name); // "dirlab" | "acdc"

// Applies one "key = value" setting; throws on unknown keys or bad values.
// Keys mirror the TrainConfig fields (iterations, batch_size, k, grid_shape,
// dof, lr_position, ..., seed).
void apply_config_key(TrainConfig& cfg, const std::string& key, const std::string& value);

// Config file: a JSON object or flat "key = value" lines (# comments allowed).
// Settings override whatever is already in cfg.
void apply_config_file(TrainConfig& cfg, const std::string& path);

// Synthetic-case manifest (field parameters, geometry, seeds) so a case
// directory is self-describing and reloadable.
void write_case_manifest(const std::string& path, const AnalyticField& field, double magnitude,
                         const GridMeta& geometry, int n_landmarks, uint64_t seed);
AnalyticField read_case_manifest(const std::string& path);

} // namespace gdir
