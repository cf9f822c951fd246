#include "gdir/trainer.hpp"

#include "gdir/errors.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <memory>

namespace gdir {

TrainConfig TrainConfig::preset_dirlab() {
    TrainConfig c;
    c.iterations = 2000;
    c.batch_size = 10000;
    c.k = 10;
    c.grid_shape = {10, 10, 10};
    c.lr_position = 0.005;
    c.lr_scale = 0.002;
    c.lr_translation = 0.002;
    c.lr_rotation = 0.002;
    return c;
}

TrainConfig TrainConfig::preset_acdc() {
    TrainConfig c = preset_dirlab();
    c.iterations = 2000;
    c.lr_position = 0.003;
    c.lr_scale = 0.001;
    c.lr_translation = 0.001;
    c.lr_rotation = 0.001;
    return c;
}

void TrainConfig::validate() const {
    dof.validate();
    if (iterations < 0) throw validation_error("config: iterations must be >= 0");
    if (batch_size < 2) throw validation_error("config: batch_size must be >= 2");
    if (k < 1 || k > 64) throw validation_error("config: k must be in [1, 64]");
    for (int a = 0; a < 3; ++a)
        if (grid_shape[a] < 2) throw validation_error("config: grid_shape components must be >= 2");
    if (!(lr_position > 0)) throw validation_error("config: lr_position must be > 0");
    if (!(lr_scale > 0)) throw validation_error("config: lr_scale must be > 0");
    if (dof.transform_translation && !(lr_translation > 0))
        throw validation_error("config: lr_translation must be > 0");
    if ((dof.transform_rotation == RotationMode::quaternion ||
         dof.gaussian_rotation == RotationMode::quaternion) &&
        !(lr_rotation > 0))
        throw validation_error("config: lr_rotation must be > 0");
    if (warmup_fraction < 0.0 || warmup_fraction >= 1.0)
        throw validation_error("config: warmup_fraction must be in [0, 1)");
    if (densify_interval < 1) throw validation_error("config: densify_interval must be >= 1");
    if (tau_max > 0.0 && tau_min > 0.0 && !(tau_min < tau_max))
        throw validation_error("config: tau_min must be < tau_max");
    if (!(tau_rel_lo < tau_rel_hi))
        throw validation_error("config: tau_rel_lo must be < tau_rel_hi");
    if (n_min < 1) throw validation_error("config: n_min must be >= 1");
    if (n_max < n_min) throw validation_error("config: n_max must be >= n_min");
    if (knn_refresh_interval < 1)
        throw validation_error("config: knn_refresh_interval must be >= 1");
}

double lr_schedule(int step, int total, double warmup_fraction, double base_lr) {
    if (step < 0 || step >= total) throw validation_error("lr_schedule: step out of range");
    const int warmup = static_cast<int>(std::ceil(warmup_fraction * total));
    if (step < warmup) return base_lr * static_cast<double>(step) / warmup;
    const double lr_min = 0.01 * base_lr;
    const int span = std::max(1, total - 1 - warmup);
    const double progress = static_cast<double>(step - warmup) / span;
    return lr_min + (base_lr - lr_min) * 0.5 * (1.0 + std::cos(M_PI * progress));
}

bool adam_step(std::vector<double>& params, std::span<const double> grads, AdamState& state,
               double lr, double beta1, double beta2, double eps) {
    if (params.size() != grads.size() || params.size() != state.m.size())
        throw validation_error("adam_step: shape mismatch");
    for (double g : grads)
        if (!std::isfinite(g)) return false;

    ++state.t;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(state.t));
    for (std::size_t i = 0; i < params.size(); ++i) {
        state.m[i] = beta1 * state.m[i] + (1.0 - beta1) * grads[i];
        state.v[i] = beta2 * state.v[i] + (1.0 - beta2) * grads[i] * grads[i];
        const double m_hat = state.m[i] / bc1;
        const double v_hat = state.v[i] / bc2;
        params[i] -= lr * m_hat / (std::sqrt(v_hat) + eps);
    }
    return true;
}

void AdamParamState::resize_like(const GaussianSet& g) {
    positions.resize(g.positions.size());
    log_scales.resize(g.log_scales.size());
    shape_rotations.resize(g.shape_rotations.size());
    translations.resize(g.translations.size());
    transform_rotations.resize(g.transform_rotations.size());
}

void DensifyStats::accumulate(const ParamGrads& grads) {
    for (std::size_t i = 0; i < count.size(); ++i) {
        if (!grads.touched[i]) continue;
        norm_sum[i] += grads.position_grad_norm(static_cast<int>(i));
        ++count[i];
    }
}

namespace {

void renormalize_quaternions(std::vector<double>& quats) {
    for (std::size_t i = 0; i + 3 < quats.size(); i += 4) {
        const double n = std::sqrt(quats[i] * quats[i] + quats[i + 1] * quats[i + 1] +
                                   quats[i + 2] * quats[i + 2] + quats[i + 3] * quats[i + 3]);
        if (n > 1e-12)
            for (int c = 0; c < 4; ++c) quats[i + c] /= n;
        else {
            quats[i] = 1.0;
            quats[i + 1] = quats[i + 2] = quats[i + 3] = 0.0;
        }
    }
}

// Removes per-point rows from Adam moment arrays / appends zeroed rows, in
// lockstep with clone/prune on the GaussianSet.
void adam_remove_rows(AdamState& s, const std::vector<char>& dead, int stride) {
    auto compact = [&](std::vector<double>& v) {
        if (v.empty()) return;
        std::size_t w = 0;
        for (std::size_t i = 0; i < dead.size(); ++i) {
            if (dead[i]) continue;
            for (int c = 0; c < stride; ++c) v[w * stride + c] = v[i * stride + c];
            ++w;
        }
        v.resize(w * stride);
    };
    compact(s.m);
    compact(s.v);
}

void adam_append_row(AdamState& s, int parent, int stride, bool inherit) {
    for (int c = 0; c < stride; ++c) {
        s.m.push_back(inherit ? s.m[static_cast<std::size_t>(parent) * stride + c] : 0.0);
        s.v.push_back(inherit ? s.v[static_cast<std::size_t>(parent) * stride + c] : 0.0);
    }
}

double median_of(std::vector<double> values) {
    const std::size_t n = values.size();
    std::nth_element(values.begin(), values.begin() + n / 2, values.end());
    double med = values[n / 2];
    if (n % 2 == 0) {
        std::nth_element(values.begin(), values.begin() + n / 2 - 1, values.end());
        med = 0.5 * (med + values[n / 2 - 1]);
    }
    return med;
}

} // namespace

DensifyOutcome densify(GaussianSet& g, DensifyStats& stats, const TrainConfig& cfg, Rng& rng,
                       AdamParamState& adam) {
    DensifyOutcome out;
    const int n0 = g.n;

    std::vector<double> means(static_cast<std::size_t>(n0));
    for (int i = 0; i < n0; ++i) means[i] = stats.mean_norm(i);

    double tau_max = cfg.tau_max, tau_min = cfg.tau_min;
    if (tau_max <= 0.0 || tau_min <= 0.0) {
        const double med = median_of(means);
        if (!(med > 0.0)) { // no statistics accumulated yet; do nothing
            out.skipped = true;
            stats.reset(n0);
            return out;
        }
        if (tau_max <= 0.0) tau_max = cfg.tau_rel_hi * med;
        if (tau_min <= 0.0) tau_min = cfg.tau_rel_lo * med;
    }

    std::vector<int> clone_parents;
    std::vector<std::pair<double, int>> prune_candidates; // (mean, index)
    for (int i = 0; i < n0; ++i) {
        if (means[i] > tau_max)
            clone_parents.push_back(i);
        else if (means[i] < tau_min)
            prune_candidates.push_back({means[i], i});
    }

    // Prune first (bounded by the floor, lowest means go first), then clone
    // the surviving parents.
    int allowed = std::max(0, n0 - cfg.n_min);
    std::vector<int> prune_idx;
    if (!prune_candidates.empty() && allowed > 0) {
        std::sort(prune_candidates.begin(), prune_candidates.end());
        for (const auto& [mean, idx] : prune_candidates) {
            if (static_cast<int>(prune_idx.size()) >= allowed) break;
            prune_idx.push_back(idx);
        }
    }
    std::vector<char> dead(static_cast<std::size_t>(n0), 0);
    for (int idx : prune_idx) dead[idx] = 1;

    if (!prune_idx.empty()) {
        prune_points(g, prune_idx, cfg.n_min);
        adam_remove_rows(adam.positions, dead, 3);
        adam_remove_rows(adam.log_scales, dead, g.scale_stride());
        adam_remove_rows(adam.shape_rotations, dead, 4);
        adam_remove_rows(adam.translations, dead, 3);
        adam_remove_rows(adam.transform_rotations, dead, 4);
        out.pruned = static_cast<int>(prune_idx.size());
    }

    // Map surviving parents to their post-prune indices.
    std::vector<int> new_index(static_cast<std::size_t>(n0), -1);
    int w = 0;
    for (int i = 0; i < n0; ++i)
        if (!dead[i]) new_index[i] = w++;

    for (int parent : clone_parents) {
        if (g.n >= cfg.n_max) break;
        const int p = new_index[parent];
        clone_point(g, p, rng);
        adam_append_row(adam.positions, p, 3, cfg.clone_inherit_moments);
        adam_append_row(adam.log_scales, p, g.scale_stride(), cfg.clone_inherit_moments);
        if (g.config.gaussian_rotation == RotationMode::quaternion)
            adam_append_row(adam.shape_rotations, p, 4, cfg.clone_inherit_moments);
        if (g.config.transform_translation)
            adam_append_row(adam.translations, p, 3, cfg.clone_inherit_moments);
        if (g.config.transform_rotation == RotationMode::quaternion)
            adam_append_row(adam.transform_rotations, p, 4, cfg.clone_inherit_moments);
        ++out.cloned;
    }

    stats.reset(g.n);
    return out;
}

TrainResult train(const Volume3& fixed, const Volume3& moving, const TrainConfig& cfg,
                  const MaskVolume* mask) {
    cfg.validate();
    fixed.validate();
    moving.validate();

    const auto t_start = std::chrono::steady_clock::now();

    Box3 bounds = fixed.meta.world_bounds();
    if (mask) {
        Vec3 lo{1e300, 1e300, 1e300}, hi{-1e300, -1e300, -1e300};
        const GridMeta& mm = mask->meta;
        for (int iz = 0; iz < mm.dims[2]; ++iz)
            for (int iy = 0; iy < mm.dims[1]; ++iy)
                for (int ix = 0; ix < mm.dims[0]; ++ix)
                    if (mask->at(ix, iy, iz) > 0) {
                        const Vec3 p = mm.voxel_center(ix, iy, iz);
                        for (int a = 0; a < 3; ++a) {
                            lo[a] = std::min(lo[a], p[a]);
                            hi[a] = std::max(hi[a], p[a]);
                        }
                    }
        if (lo.x > hi.x) throw validation_error("train: mask has no positive voxels");
        // A flat mask region still needs a usable box along every axis.
        for (int a = 0; a < 3; ++a)
            if (!(hi[a] > lo[a])) hi[a] = lo[a] + fixed.meta.spacing[a];
        bounds = {lo, hi};
    }

    TrainResult result;
    result.set = init_grid(bounds, cfg.grid_shape, cfg.dof);
    GaussianSet& g = result.set;

    Rng rng(cfg.seed);
    AdamParamState adam;
    adam.resize_like(g);
    DensifyStats stats;
    stats.reset(g.n);

    const int densify_start = static_cast<int>(cfg.densify_start_fraction * cfg.iterations);
    const int densify_stop = static_cast<int>(cfg.densify_stop_fraction * cfg.iterations);

    std::unique_ptr<SpatialIndex> index;
    bool index_stale = true;
    result.log.reserve(static_cast<std::size_t>(cfg.iterations));

    for (int step = 0; step < cfg.iterations; ++step) {
        const auto t0 = std::chrono::steady_clock::now();

        if (index_stale || step % cfg.knn_refresh_interval == 0) {
            index = std::make_unique<SpatialIndex>(g.positions);
            index_stale = false;
        }

        const std::vector<Vec3> points = sample_batch(fixed, cfg.batch_size, rng, mask);
        EvalResult eval = evaluate(g, fixed, moving, points, *index, cfg.k, step);
        if (!std::isfinite(eval.report.ncc))
            throw numeric_error("train: non-finite loss at step " + std::to_string(step));
        result.underflow_events += eval.report.underflow_count;

        const double lr_pos = lr_schedule(step, cfg.iterations, cfg.warmup_fraction, cfg.lr_position);
        const double lr_scale = lr_schedule(step, cfg.iterations, cfg.warmup_fraction, cfg.lr_scale);
        const double lr_trans =
            lr_schedule(step, cfg.iterations, cfg.warmup_fraction, cfg.lr_translation);
        const double lr_rot =
            lr_schedule(step, cfg.iterations, cfg.warmup_fraction, cfg.lr_rotation);

        auto update = [&](std::vector<double>& params, const std::vector<double>& grads,
                          AdamState& state, double lr) {
            if (params.empty()) return;
            if (!adam_step(params, grads, state, lr, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps))
                ++result.skipped_group_updates;
        };
        update(g.positions, eval.grads.positions, adam.positions, lr_pos);
        update(g.log_scales, eval.grads.log_scales, adam.log_scales, lr_scale);
        update(g.shape_rotations, eval.grads.shape_rotations, adam.shape_rotations, lr_rot);
        update(g.translations, eval.grads.translations, adam.translations, lr_trans);
        update(g.transform_rotations, eval.grads.transform_rotations, adam.transform_rotations,
               lr_rot);
        renormalize_quaternions(g.shape_rotations);
        renormalize_quaternions(g.transform_rotations);

        stats.accumulate(eval.grads);

        if (cfg.densify && step >= densify_start && step < densify_stop &&
            (step + 1) % cfg.densify_interval == 0) {
            const DensifyOutcome d = densify(g, stats, cfg, rng, adam);
            if (d.cloned > 0 || d.pruned > 0) index_stale = true;
        }

        const auto t1 = std::chrono::steady_clock::now();
        result.log.push_back(TrainLogRow{
            step, eval.report.ncc, g.n, lr_pos, lr_scale, lr_trans,
            std::chrono::duration<double, std::milli>(t1 - t0).count()});
    }

    result.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    return result;
}

void write_convergence_csv(const std::vector<TrainLogRow>& log, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw io_error("cannot open '" + path + "' for writing");
    out << "step,loss,n,lr_pos,lr_scale,lr_trans,ms\n";
    char buf[256];
    for (const TrainLogRow& r : log) {
        std::snprintf(buf, sizeof buf, "%d,%.12g,%d,%.9g,%.9g,%.9g,%.3f\n", r.step, r.loss, r.n,
                      r.lr_pos, r.lr_scale, r.lr_trans, r.ms);
        out << buf;
    }
    if (!out) throw io_error("write failed on '" + path + "'");
}

} // namespace gdir
