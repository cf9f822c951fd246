// gdir: deformable 3D registration with learnable Gaussian control points.
//
// Subcommands: register, warp, eval, synth, sweep. Data outputs are
// reproducible for a fixed seed; wall-clock columns are the only exception.

#include "gdir/cli_config.hpp"
#include "gdir/control_points.hpp"
#include "gdir/errors.hpp"
#include "gdir/metrics.hpp"
#include "gdir/objective.hpp"
#include "gdir/synthetic.hpp"
#include "gdir/trainer.hpp"
#include "gdir/volume.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace gdir;

namespace {

void write_json_file(const json& j, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw io_error("cannot open '" + path + "' for writing");
    out << j.dump(2) << "\n";
    if (!out) throw io_error("write failed on '" + path + "'");
}

LandmarkUnits parse_units(const std::string& s) {
    if (s == "mm") return LandmarkUnits::millimeters;
    if (s == "voxel") return LandmarkUnits::voxels;
    throw validation_error("--landmark-units must be 'mm' or 'voxel'");
}

struct RegisterArgs {
    std::string fixed, moving, mask, config, out, preset;
    // flag-level overrides, applied last
    std::vector<std::pair<std::string, std::string>> overrides;
};

int cmd_register(const RegisterArgs& args) {
    TrainConfig cfg;
    if (!args.preset.empty()) cfg = train_preset(args.preset);
    if (!args.config.empty()) apply_config_file(cfg, args.config);
    for (const auto& [key, value] : args.overrides) apply_config_key(cfg, key, value);
    cfg.validate();

    const Volume3 fixed = load_volume(args.fixed);
    const Volume3 moving = load_volume(args.moving);
    MaskVolume mask;
    const bool have_mask = !args.mask.empty();
    if (have_mask) mask = load_mask(args.mask);

    fs::create_directories(args.out);

    TrainResult result = train(fixed, moving, cfg, have_mask ? &mask : nullptr);

    save_checkpoint(result.set, fixed.meta, cfg.k, (fs::path(args.out) / "checkpoint.ckpt").string());
    write_convergence_csv(result.log, (fs::path(args.out) / "convergence.csv").string());

    const SpatialIndex index(result.set.positions);
    export_dense_dvf(result.set, fixed.meta, index, cfg.k,
                     (fs::path(args.out) / "dvf.raw").string());

    json report{{"final_loss", result.log.empty() ? 0.0 : result.log.back().loss},
                {"n_gaussians", result.set.n},
                {"param_count", result.set.param_count()},
                {"iterations", cfg.iterations},
                {"seed", cfg.seed},
                {"dof", result.set.config.name()},
                {"underflow_events", result.underflow_events},
                {"skipped_group_updates", result.skipped_group_updates},
                {"wall_clock_s", result.wall_seconds}};
    write_json_file(report, (fs::path(args.out) / "report.json").string());
    return 0;
}

int cmd_warp(const std::string& moving_path, const std::string& checkpoint_path,
             const std::string& out_path, const std::string& mask_mode) {
    const Checkpoint ck = load_checkpoint(checkpoint_path);
    const SpatialIndex index(ck.set.positions);

    if (mask_mode == "nearest") {
        const MaskVolume moving = load_mask(moving_path);
        const MaskVolume warped = warp_mask(ck.set, moving, ck.geometry, index, ck.k);
        Volume3 as_volume;
        as_volume.meta = warped.meta;
        as_volume.data.assign(warped.data.begin(), warped.data.end());
        write_volume(as_volume, out_path);
    } else if (mask_mode.empty()) {
        const Volume3 moving = load_volume(moving_path);
        const Volume3 warped = warp_volume(ck.set, moving, ck.geometry, index, ck.k);
        write_volume(warped, out_path);
    } else {
        throw validation_error("--mask-mode only supports 'nearest'");
    }
    return 0;
}

int cmd_eval(const std::string& checkpoint_path, const std::string& lm_fixed_path,
             const std::string& lm_moving_path, const std::string& units_str,
             const std::string& seg_fixed_path, const std::string& seg_moving_path,
             const std::string& out_path) {
    if (lm_fixed_path.empty() && seg_fixed_path.empty())
        throw validation_error("eval: supply landmarks and/or segmentations");

    const auto t0 = std::chrono::steady_clock::now();
    const Checkpoint ck = load_checkpoint(checkpoint_path);
    const SpatialIndex index(ck.set.positions);

    json report{{"n_gaussians", ck.set.n},
                {"param_count", ck.set.param_count()},
                {"landmark_convention",
                 "fixed-image landmarks mapped forward by the displacement field, compared "
                 "against moving-image landmarks; std is the population standard deviation"}};

    if (!lm_fixed_path.empty()) {
        if (lm_moving_path.empty())
            throw validation_error("eval: --landmarks-fixed requires --landmarks-moving");
        const LandmarkUnits units = parse_units(units_str);
        const LandmarkSet lm_fixed = load_landmarks(lm_fixed_path, units, ck.geometry);
        const LandmarkSet lm_moving = load_landmarks(lm_moving_path, units, ck.geometry);
        const LandmarkSet warped = warp_landmarks(ck.set, lm_fixed, index, ck.k);
        const TreResult r = tre(warped, lm_moving);
        report["mean_tre_mm"] = r.mean;
        report["std_tre_mm"] = r.stddev;
        report["per_landmark"] = r.per_landmark;
    }

    if (!seg_fixed_path.empty()) {
        if (seg_moving_path.empty())
            throw validation_error("eval: --seg-fixed requires --seg-moving");
        const MaskVolume seg_fixed = load_mask(seg_fixed_path);
        const MaskVolume seg_moving = load_mask(seg_moving_path);
        const MaskVolume warped = warp_mask(ck.set, seg_moving, seg_fixed.meta, index, ck.k);
        json per_label = json::object();
        double sum = 0.0;
        const std::vector<int32_t> labels = mask_labels(seg_fixed);
        for (int32_t label : labels) {
            const double d = dsc(seg_fixed, warped, label);
            per_label[std::to_string(label)] = d;
            sum += d;
        }
        report["dsc_per_label"] = per_label;
        if (!labels.empty()) report["dsc_average"] = sum / static_cast<double>(labels.size());
    }

    report["wall_clock_s"] =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    write_json_file(report, out_path);
    return 0;
}

int cmd_synth(const std::string& kind_str, double magnitude, std::vector<int> dims,
              std::vector<double> spacing, int n_landmarks, uint64_t seed,
              const std::string& out_dir) {
    if (dims.size() != 3) throw validation_error("synth: --dims needs three integers");
    if (spacing.size() != 3) throw validation_error("synth: --spacing needs three values");
    const WarpKind kind = warp_kind_from_name(kind_str);

    const Volume3 phantom =
        make_phantom({dims[0], dims[1], dims[2]}, {spacing[0], spacing[1], spacing[2]}, seed);
    const AnalyticField field = make_warp(kind, magnitude, phantom.meta.world_bounds(), seed + 1);
    const SyntheticCase c = make_case(phantom, field, n_landmarks, seed + 2);

    fs::create_directories(out_dir);
    write_volume(c.fixed, (fs::path(out_dir) / "fixed.raw").string());
    write_volume(c.moving, (fs::path(out_dir) / "moving.raw").string());
    write_landmarks(c.landmarks_fixed, (fs::path(out_dir) / "landmarks_fixed.csv").string());
    write_landmarks(c.landmarks_moving, (fs::path(out_dir) / "landmarks_moving.csv").string());
    write_case_manifest((fs::path(out_dir) / "manifest.json").string(), field, magnitude,
                        c.fixed.meta, n_landmarks, seed);
    return 0;
}

struct CaseData {
    Volume3 fixed, moving;
    LandmarkSet lm_fixed, lm_moving;
};

CaseData load_case_dir(const std::string& dir) {
    CaseData c;
    c.fixed = load_volume((fs::path(dir) / "fixed.raw").string());
    c.moving = load_volume((fs::path(dir) / "moving.raw").string());
    c.lm_fixed = load_landmarks((fs::path(dir) / "landmarks_fixed.csv").string(),
                                LandmarkUnits::millimeters, c.fixed.meta);
    c.lm_moving = load_landmarks((fs::path(dir) / "landmarks_moving.csv").string(),
                                 LandmarkUnits::millimeters, c.fixed.meta);
    if (c.lm_fixed.size() != c.lm_moving.size())
        throw validation_error("case dir: landmark files differ in length");
    return c;
}

int cmd_sweep(const std::string& param, const std::vector<double>& values,
              const std::string& case_dir, const std::string& out_csv,
              const std::vector<uint64_t>& seeds, const std::string& config_path,
              const std::string& preset, const std::string& checkpoint_path) {
    if (param != "k" && param != "iterations" && param != "prune_ratio")
        throw validation_error("sweep: --param must be k, iterations, or prune_ratio");
    if (values.empty()) throw validation_error("sweep: --values must not be empty");

    TrainConfig base;
    if (!preset.empty()) base = train_preset(preset);
    if (!config_path.empty()) apply_config_file(base, config_path);

    const CaseData data = load_case_dir(case_dir);

    std::ofstream out(out_csv);
    if (!out) throw io_error("cannot open '" + out_csv + "' for writing");
    out << "param,value,seed,mean_tre,std_tre,n_gaussians,wall_s\n";

    char row[256];
    for (double value : values) {
        for (uint64_t seed : seeds) {
            double mean_tre = 0.0, std_tre = 0.0, wall_s = 0.0;
            int n_gaussians = 0;

            if (param == "prune_ratio") {
                if (checkpoint_path.empty())
                    throw validation_error("sweep: prune_ratio mode requires --checkpoint");
                if (value < 0.0 || value >= 1.0)
                    throw validation_error("sweep: prune_ratio values must be in [0, 1)");
                const auto t0 = std::chrono::steady_clock::now();
                Checkpoint ck = load_checkpoint(checkpoint_path);
                const int n_prune = static_cast<int>(value * ck.set.n);
                if (n_prune > 0) {
                    Rng rng(seed);
                    std::vector<int> all(ck.set.n);
                    for (int i = 0; i < ck.set.n; ++i) all[i] = i;
                    for (int i = 0; i < n_prune; ++i) {
                        const auto j = i + static_cast<int>(rng.uniform_index(all.size() - i));
                        std::swap(all[i], all[j]);
                    }
                    all.resize(n_prune);
                    prune_points(ck.set, all);
                }
                const SpatialIndex index(ck.set.positions);
                const LandmarkSet warped = warp_landmarks(ck.set, data.lm_fixed, index, ck.k);
                const TreResult r = tre(warped, data.lm_moving);
                mean_tre = r.mean;
                std_tre = r.stddev;
                n_gaussians = ck.set.n;
                wall_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
                             .count();
            } else {
                TrainConfig cfg = base;
                if (param == "k") cfg.k = static_cast<int>(value);
                else cfg.iterations = static_cast<int>(value);
                cfg.seed = seed;
                cfg.validate();
                TrainResult result = train(data.fixed, data.moving, cfg);
                const SpatialIndex index(result.set.positions);
                const LandmarkSet warped =
                    warp_landmarks(result.set, data.lm_fixed, index, cfg.k);
                const TreResult r = tre(warped, data.lm_moving);
                mean_tre = r.mean;
                std_tre = r.stddev;
                n_gaussians = result.set.n;
                wall_s = result.wall_seconds;
            }

            std::snprintf(row, sizeof row, "%s,%.9g,%llu,%.9g,%.9g,%d,%.3f\n", param.c_str(),
                          value, static_cast<unsigned long long>(seed), mean_tre, std_tre,
                          n_gaussians, wall_s);
            out << row;
            out.flush();
        }
    }
    if (!out) throw io_error("write failed on '" + out_csv + "'");
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Deformable 3D registration with Gaussian control points"};
    app.require_subcommand(1);

    // register
    RegisterArgs reg;
    auto* sub_reg = app.add_subcommand("register", "Optimize a deformation between two volumes");
    sub_reg->add_option("--fixed", reg.fixed, "Fixed (reference) volume")->required();
    sub_reg->add_option("--moving", reg.moving, "Moving volume to warp")->required();
    sub_reg->add_option("--mask", reg.mask, "Sampling mask volume");
    sub_reg->add_option("--config", reg.config, "Config file (JSON or key=value lines)");
    sub_reg->add_option("--out", reg.out, "Output directory")->required();
    sub_reg->add_option("--preset", reg.preset, "Hyperparameter preset: dirlab or acdc");
    std::map<std::string, std::string> flag_overrides;
    for (const char* key :
         {"iterations", "batch_size", "k", "grid_shape", "dof", "lr_position", "lr_scale",
          "lr_translation", "lr_rotation", "seed", "densify", "n_min", "n_max", "tau_max",
          "tau_min", "densify_interval", "knn_refresh_interval", "warmup_fraction"}) {
        std::string flag = "--" + std::string(key);
        for (char& ch : flag)
            if (ch == '_') ch = '-';
        sub_reg->add_option_function<std::string>(
            flag, [&flag_overrides, key](const std::string& v) { flag_overrides[key] = v; },
            "Override config key " + std::string(key));
    }

    // warp
    std::string warp_moving, warp_ckpt, warp_out, warp_mask_mode;
    auto* sub_warp = app.add_subcommand("warp", "Resample a volume through a trained deformation");
    sub_warp->add_option("--moving", warp_moving, "Volume to warp")->required();
    sub_warp->add_option("--checkpoint", warp_ckpt, "Trained checkpoint")->required();
    sub_warp->add_option("--out", warp_out, "Output volume path (.raw)")->required();
    sub_warp->add_option("--mask-mode", warp_mask_mode,
                         "'nearest' to warp a label volume without blending");

    // eval
    std::string eval_ckpt, eval_lmf, eval_lmm, eval_units, eval_segf, eval_segm, eval_out;
    auto* sub_eval = app.add_subcommand("eval", "Evaluate TRE / DSC for a trained deformation");
    sub_eval->add_option("--checkpoint", eval_ckpt, "Trained checkpoint")->required();
    auto* opt_lmf = sub_eval->add_option("--landmarks-fixed", eval_lmf, "Fixed-image landmarks CSV");
    sub_eval->add_option("--landmarks-moving", eval_lmm, "Moving-image landmarks CSV");
    auto* opt_units = sub_eval->add_option("--landmark-units", eval_units,
                                           "Units of landmark files: mm or voxel (required with "
                                           "landmarks; voxel converts via checkpoint geometry)");
    opt_lmf->needs(opt_units);
    sub_eval->add_option("--seg-fixed", eval_segf, "Fixed-image segmentation mask");
    sub_eval->add_option("--seg-moving", eval_segm, "Moving-image segmentation mask");
    sub_eval->add_option("--out", eval_out, "Report JSON path")->required();

    // synth
    std::string synth_kind = "gaussian_bumps", synth_out;
    double synth_magnitude = 5.0;
    std::vector<int> synth_dims{64, 64, 64};
    std::vector<double> synth_spacing{1.0, 1.0, 1.0};
    int synth_landmarks = 100;
    uint64_t synth_seed = 0;
    auto* sub_synth = app.add_subcommand("synth", "Generate a synthetic ground-truth case");
    sub_synth->add_option("--kind", synth_kind,
                          "constant_shift, affine, or gaussian_bumps");
    sub_synth->add_option("--magnitude", synth_magnitude, "Peak displacement in mm");
    sub_synth->add_option("--dims", synth_dims, "Voxels per axis")->expected(3);
    sub_synth->add_option("--spacing", synth_spacing, "mm per voxel")->expected(3);
    sub_synth->add_option("--landmarks", synth_landmarks, "Number of landmark pairs");
    sub_synth->add_option("--seed", synth_seed, "Generation seed");
    sub_synth->add_option("--out", synth_out, "Output directory")->required();

    // sweep
    std::string sweep_param, sweep_case, sweep_out, sweep_config, sweep_preset, sweep_ckpt;
    std::vector<double> sweep_values;
    std::vector<uint64_t> sweep_seeds{0};
    auto* sub_sweep = app.add_subcommand("sweep", "Parameter sweeps over a case directory");
    sub_sweep->add_option("--param", sweep_param, "k, iterations, or prune_ratio")->required();
    sub_sweep->add_option("--values", sweep_values, "Values to sweep")->required();
    sub_sweep->add_option("--case", sweep_case, "Case directory (synth output)")->required();
    sub_sweep->add_option("--out", sweep_out, "Output CSV path")->required();
    sub_sweep->add_option("--seeds", sweep_seeds, "Seeds to average over");
    sub_sweep->add_option("--config", sweep_config, "Base config file");
    sub_sweep->add_option("--preset", sweep_preset, "Base preset: dirlab or acdc");
    sub_sweep->add_option("--checkpoint", sweep_ckpt, "Trained checkpoint (prune_ratio mode)");

    try {
        app.parse(argc, argv);

        if (sub_reg->parsed()) {
            for (const auto& [key, value] : flag_overrides) reg.overrides.push_back({key, value});
            return cmd_register(reg);
        }
        if (sub_warp->parsed()) return cmd_warp(warp_moving, warp_ckpt, warp_out, warp_mask_mode);
        if (sub_eval->parsed())
            return cmd_eval(eval_ckpt, eval_lmf, eval_lmm, eval_units, eval_segf, eval_segm,
                            eval_out);
        if (sub_synth->parsed())
            return cmd_synth(synth_kind, synth_magnitude, synth_dims, synth_spacing,
                             synth_landmarks, synth_seed, synth_out);
        if (sub_sweep->parsed())
            return cmd_sweep(sweep_param, sweep_values, sweep_case, sweep_out, sweep_seeds,
                             sweep_config, sweep_preset, sweep_ckpt);
        return 0;
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e); // --help
        std::cerr << "E_VALIDATION: " << e.what() << "\n";
        return 1;
    } catch (const parse_error& e) {
        std::cerr << "E_VALIDATION: " << e.what() << "\n";
        return 1;
    } catch (const validation_error& e) {
        std::cerr << "E_VALIDATION: " << e.what() << "\n";
        return 1;
    } catch (const io_error& e) {
        std::cerr << "E_IO: " << e.what() << "\n";
        return 2;
    } catch (const numeric_error& e) {
        std::cerr << "E_NUMERIC: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "E_VALIDATION: " << e.what() << "\n";
        return 1;
    }
}
