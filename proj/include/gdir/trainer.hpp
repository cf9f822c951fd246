#pragma once

#include "gdir/control_points.hpp"
#include "gdir/objective.hpp"

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace gdir {

// Every tunable of the optimization loop. Presets carry the two published
// recipes; synthetic desk-scale cases usually need larger translation rates
// (see TrainConfig::preset_dirlab for the baseline values).
struct TrainConfig {
    int iterations = 2000;
    int batch_size = 10000;
    int k = 10;

    std::array<int, 3> grid_shape{10, 10, 10};
    DofConfig dof; // default: isotropic scale, translation only

    double lr_position = 0.005;
    double lr_scale = 0.002;
    double lr_translation = 0.002;
    double lr_rotation = 0.002;
    double warmup_fraction = 0.05;

    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;

    bool densify = true;
    int densify_interval = 100;
    double densify_start_fraction = 0.1;
    double densify_stop_fraction = 0.8;
    // Absolute gradient-norm thresholds; 0 selects the relative rule
    // tau = factor * median(per-Gaussian mean norm).
    double tau_max = 0.0;
    double tau_min = 0.0;
    double tau_rel_hi = 4.0;
    double tau_rel_lo = 0.05;
    bool clone_inherit_moments = false;

    int n_min = 64;
    int n_max = 100000;
    int knn_refresh_interval = 1;
    uint64_t seed = 0;

    static TrainConfig preset_dirlab();
    static TrainConfig preset_acdc();
    void validate() const;
};

// Linear warm-up to base_lr over ceil(warmup_fraction * total) steps, then
// cosine decay to 0.01 * base_lr at the final step.
double lr_schedule(int step, int total, double warmup_fraction, double base_lr);

struct AdamState {
    std::vector<double> m, v;
    int64_t t = 0;

    void resize(std::size_t param_count) {
        m.assign(param_count, 0.0);
        v.assign(param_count, 0.0);
    }
};

// One bias-corrected Adam update for a parameter group. Returns false (and
// leaves the group untouched) when any gradient entry is non-finite.
bool adam_step(std::vector<double>& params, std::span<const double> grads, AdamState& state,
               double lr, double beta1, double beta2, double eps);

// Moment accumulators per parameter group, kept in lockstep with GaussianSet.
struct AdamParamState {
    AdamState positions, log_scales, shape_rotations, translations, transform_rotations;
    void resize_like(const GaussianSet& g);
};

// Running mean of per-Gaussian position-gradient norms since the last
// densification event.
struct DensifyStats {
    std::vector<double> norm_sum;
    std::vector<int64_t> count;

    void reset(int n) {
        norm_sum.assign(static_cast<std::size_t>(n), 0.0);
        count.assign(static_cast<std::size_t>(n), 0);
    }
    void accumulate(const ParamGrads& grads);
    double mean_norm(int i) const {
        return count[i] > 0 ? norm_sum[i] / static_cast<double>(count[i]) : 0.0;
    }
};

struct DensifyOutcome {
    int cloned = 0;
    int pruned = 0;
    bool skipped = false; // no usable statistics yet
};

// Clone every Gaussian whose mean gradient norm exceeds tau_max (up to n_max)
// and prune every one below tau_min (down to n_min); Adam slots and stats are
// resized in lockstep and stats are reset.
DensifyOutcome densify(GaussianSet& g, DensifyStats& stats, const TrainConfig& cfg, Rng& rng,
                       AdamParamState& adam);

struct TrainLogRow {
    int step = 0;
    double loss = 0.0;
    int n = 0;
    double lr_pos = 0.0, lr_scale = 0.0, lr_trans = 0.0;
    double ms = 0.0;
};

struct TrainResult {
    GaussianSet set;
    std::vector<TrainLogRow> log;
    int64_t underflow_events = 0;
    int64_t skipped_group_updates = 0;
    double wall_seconds = 0.0;
};

// The full optimization loop: sample, evaluate, Adam update, densify on
// schedule, with the KNN index refreshed as positions move.
TrainResult train(const Volume3& fixed, const Volume3& moving, const TrainConfig& cfg,
                  const MaskVolume* mask = nullptr);

// CSV: step,loss,n,lr_pos,lr_scale,lr_trans,ms. The ms column is wall-clock
// and is excluded from reproducibility comparisons.
void write_convergence_csv(const std::vector<TrainLogRow>& log, const std::string& path);

} // namespace gdir
