#include "gdir/control_points.hpp"

#include "gdir/errors.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

using nlohmann::json;

namespace gdir {

DofConfig DofConfig::preset(int index) {
    DofConfig c;
    switch (index) {
    case 1: // isotropic, translation only
        c = {ScalingMode::isotropic, RotationMode::none, RotationMode::none, true};
        break;
    case 2: // isotropic, rotation + translation
        c = {ScalingMode::isotropic, RotationMode::none, RotationMode::quaternion, true};
        break;
    case 3: // diagonal scales, translation only
        c = {ScalingMode::diagonal, RotationMode::none, RotationMode::none, true};
        break;
    case 4: // diagonal scales, rotation + translation
        c = {ScalingMode::diagonal, RotationMode::none, RotationMode::quaternion, true};
        break;
    case 5: // full Gaussian shape, translation only
        c = {ScalingMode::diagonal, RotationMode::quaternion, RotationMode::none, true};
        break;
    case 6: // full Gaussian shape, rotation + translation
        c = {ScalingMode::diagonal, RotationMode::quaternion, RotationMode::quaternion, true};
        break;
    default:
        throw validation_error("DofConfig::preset: index must be 1..6");
    }
    return c;
}

DofConfig DofConfig::from_name(const std::string& name) {
    static const std::array<std::string, 6> names = {"I", "II", "III", "IV", "V", "VI"};
    for (int i = 0; i < 6; ++i)
        if (name == names[i]) return preset(i + 1);
    throw validation_error("DofConfig: unknown config name '" + name + "' (expected I..VI)");
}

std::string DofConfig::name() const {
    static const std::array<std::string, 6> names = {"I", "II", "III", "IV", "V", "VI"};
    for (int i = 0; i < 6; ++i)
        if (*this == preset(i + 1)) return names[i];
    return "custom";
}

void DofConfig::validate() const {
    if (transform_rotation == RotationMode::none && !transform_translation)
        throw validation_error(
            "DofConfig: at least one of transform rotation/translation must be enabled");
}

void GaussianSet::validate() const {
    config.validate();
    if (n < 0) throw validation_error("GaussianSet: negative count");
    const std::size_t un = static_cast<std::size_t>(n);
    if (positions.size() != un * 3) throw validation_error("GaussianSet: positions size mismatch");
    if (log_scales.size() != un * scale_stride())
        throw validation_error("GaussianSet: log_scales size mismatch");
    const std::size_t want_sr = config.gaussian_rotation == RotationMode::quaternion ? un * 4 : 0;
    if (shape_rotations.size() != want_sr)
        throw validation_error("GaussianSet: shape_rotations size mismatch");
    const std::size_t want_t = config.transform_translation ? un * 3 : 0;
    if (translations.size() != want_t)
        throw validation_error("GaussianSet: translations size mismatch");
    const std::size_t want_tr = config.transform_rotation == RotationMode::quaternion ? un * 4 : 0;
    if (transform_rotations.size() != want_tr)
        throw validation_error("GaussianSet: transform_rotations size mismatch");
}

GaussianSet init_grid(const Box3& bounds, std::array<int, 3> grid_shape, const DofConfig& config) {
    config.validate();
    if (bounds.degenerate()) throw validation_error("init_grid: degenerate bounds");
    for (int a = 0; a < 3; ++a)
        if (grid_shape[a] < 2)
            throw validation_error("init_grid: grid_shape components must be >= 2");

    GaussianSet g;
    g.config = config;
    g.n = grid_shape[0] * grid_shape[1] * grid_shape[2];

    const Vec3 ext = bounds.extent();
    const Vec3 step{ext.x / (grid_shape[0] - 1), ext.y / (grid_shape[1] - 1),
                    ext.z / (grid_shape[2] - 1)};

    g.positions.reserve(static_cast<std::size_t>(g.n) * 3);
    for (int iz = 0; iz < grid_shape[2]; ++iz)
        for (int iy = 0; iy < grid_shape[1]; ++iy)
            for (int ix = 0; ix < grid_shape[0]; ++ix) {
                g.positions.push_back(bounds.lo.x + ix * step.x);
                g.positions.push_back(bounds.lo.y + iy * step.y);
                g.positions.push_back(bounds.lo.z + iz * step.z);
            }

    const double sigma0 = 0.5 * std::max({step.x, step.y, step.z});
    g.log_scales.assign(static_cast<std::size_t>(g.n) * g.scale_stride(), std::log(sigma0));

    if (config.gaussian_rotation == RotationMode::quaternion) {
        g.shape_rotations.assign(static_cast<std::size_t>(g.n) * 4, 0.0);
        for (int i = 0; i < g.n; ++i) g.shape_rotations[4 * i] = 1.0;
    }
    if (config.transform_translation)
        g.translations.assign(static_cast<std::size_t>(g.n) * 3, 0.0);
    if (config.transform_rotation == RotationMode::quaternion) {
        g.transform_rotations.assign(static_cast<std::size_t>(g.n) * 4, 0.0);
        for (int i = 0; i < g.n; ++i) g.transform_rotations[4 * i] = 1.0;
    }
    return g;
}

Mat3 covariance(const GaussianSet& g, int i) {
    const Vec3 s = g.sigma3(i);
    const Mat3 s2 = Mat3::diag({s.x * s.x, s.y * s.y, s.z * s.z});
    if (g.config.gaussian_rotation == RotationMode::none) return s2;
    const Mat3 r = rotation_matrix(g.shape_rotation(i));
    return r * s2 * r.transposed();
}

namespace {

void append_block(std::vector<double>& dst, const std::vector<double>& src, int i, int stride) {
    for (int c = 0; c < stride; ++c) dst.push_back(src[static_cast<std::size_t>(i) * stride + c]);
}

} // namespace

int clone_point(GaussianSet& g, int i, const Vec3& displacement) {
    if (i < 0 || i >= g.n) throw validation_error("clone_point: index out of range");
    const Vec3 p = g.position(i) + displacement;
    g.positions.insert(g.positions.end(), {p.x, p.y, p.z});
    append_block(g.log_scales, g.log_scales, i, g.scale_stride());
    if (g.config.gaussian_rotation == RotationMode::quaternion)
        append_block(g.shape_rotations, g.shape_rotations, i, 4);
    if (g.config.transform_translation) append_block(g.translations, g.translations, i, 3);
    if (g.config.transform_rotation == RotationMode::quaternion)
        append_block(g.transform_rotations, g.transform_rotations, i, 4);
    return g.n++;
}

int clone_point(GaussianSet& g, int i, Rng& rng) {
    if (i < 0 || i >= g.n) throw validation_error("clone_point: index out of range");
    return clone_point(g, i, rng.normal3(g.iso_sigma(i)));
}

namespace {

template <typename T>
void remove_rows(std::vector<T>& v, const std::vector<char>& dead, int stride) {
    if (v.empty()) return;
    std::size_t w = 0;
    for (std::size_t i = 0; i < dead.size(); ++i) {
        if (dead[i]) continue;
        for (int c = 0; c < stride; ++c) v[w * stride + c] = v[i * stride + c];
        ++w;
    }
    v.resize(w * stride);
}

} // namespace

void prune_points(GaussianSet& g, std::span<const int> indices, int n_min) {
    std::vector<char> dead(static_cast<std::size_t>(g.n), 0);
    int removing = 0;
    for (int idx : indices) {
        if (idx < 0 || idx >= g.n) throw validation_error("prune_points: index out of range");
        if (dead[idx]) throw validation_error("prune_points: duplicate index");
        dead[idx] = 1;
        ++removing;
    }
    if (g.n - removing < n_min)
        throw validation_error("prune_points: pruning " + std::to_string(removing) +
                               " of " + std::to_string(g.n) + " points would violate the floor of " +
                               std::to_string(n_min));
    remove_rows(g.positions, dead, 3);
    remove_rows(g.log_scales, dead, g.scale_stride());
    remove_rows(g.shape_rotations, dead, 4);
    remove_rows(g.translations, dead, 3);
    remove_rows(g.transform_rotations, dead, 4);
    g.n -= removing;
}

namespace {

void write_f32_block(std::ofstream& out, const std::vector<double>& v) {
    std::vector<float> f(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) f[i] = static_cast<float>(v[i]);
    out.write(reinterpret_cast<const char*>(f.data()),
              static_cast<std::streamsize>(f.size() * 4));
}

std::vector<double> read_f32_block(std::ifstream& in, std::size_t count, const std::string& path) {
    std::vector<float> f(count);
    in.read(reinterpret_cast<char*>(f.data()), static_cast<std::streamsize>(count * 4));
    if (!in) throw validation_error("checkpoint '" + path + "': truncated parameter block");
    std::vector<double> d(count);
    for (std::size_t i = 0; i < count; ++i) d[i] = f[i];
    return d;
}

json config_to_json(const DofConfig& c) {
    return json{
        {"scaling", c.gaussian_scaling == ScalingMode::isotropic ? "isotropic" : "diagonal"},
        {"gaussian_rotation", c.gaussian_rotation == RotationMode::quaternion},
        {"transform_rotation", c.transform_rotation == RotationMode::quaternion},
        {"transform_translation", c.transform_translation}};
}

DofConfig config_from_json(const json& j) {
    DofConfig c;
    const std::string s = j.at("scaling").get<std::string>();
    if (s == "isotropic")
        c.gaussian_scaling = ScalingMode::isotropic;
    else if (s == "diagonal")
        c.gaussian_scaling = ScalingMode::diagonal;
    else
        throw parse_error("checkpoint: unknown scaling mode '" + s + "'");
    c.gaussian_rotation =
        j.at("gaussian_rotation").get<bool>() ? RotationMode::quaternion : RotationMode::none;
    c.transform_rotation =
        j.at("transform_rotation").get<bool>() ? RotationMode::quaternion : RotationMode::none;
    c.transform_translation = j.at("transform_translation").get<bool>();
    return c;
}

} // namespace

void save_checkpoint(const GaussianSet& g, const GridMeta& geometry, int k,
                     const std::string& path) {
    g.validate();
    json header{{"format", "gdir-checkpoint"},
                {"version", 1},
                {"n", g.n},
                {"k", k},
                {"config", config_to_json(g.config)},
                {"geometry",
                 {{"dims", {geometry.dims[0], geometry.dims[1], geometry.dims[2]}},
                  {"spacing", {geometry.spacing.x, geometry.spacing.y, geometry.spacing.z}},
                  {"origin", {geometry.origin.x, geometry.origin.y, geometry.origin.z}}}}};
    std::ofstream out(path, std::ios::binary);
    if (!out) throw io_error("cannot open checkpoint '" + path + "' for writing");
    out << header.dump() << "\n";
    write_f32_block(out, g.positions);
    write_f32_block(out, g.log_scales);
    write_f32_block(out, g.shape_rotations);
    write_f32_block(out, g.translations);
    write_f32_block(out, g.transform_rotations);
    if (!out) throw io_error("write failed on checkpoint '" + path + "'");
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw io_error("cannot open checkpoint '" + path + "'");
    std::string line;
    if (!std::getline(in, line)) throw parse_error("checkpoint '" + path + "': missing header");
    json header;
    try {
        header = json::parse(line);
    } catch (const json::exception& e) {
        throw parse_error("checkpoint '" + path + "': bad header: " + e.what());
    }
    Checkpoint ck;
    try {
        if (header.at("format").get<std::string>() != "gdir-checkpoint")
            throw parse_error("checkpoint '" + path + "': unrecognized format tag");
        ck.set.config = config_from_json(header.at("config"));
        ck.set.n = header.at("n").get<int>();
        ck.k = header.at("k").get<int>();
        const auto& geo = header.at("geometry");
        for (int a = 0; a < 3; ++a) {
            ck.geometry.dims[a] = geo.at("dims").at(a).get<int>();
            ck.geometry.spacing[a] = geo.at("spacing").at(a).get<double>();
            ck.geometry.origin[a] = geo.at("origin").at(a).get<double>();
        }
    } catch (const json::exception& e) {
        throw parse_error("checkpoint '" + path + "': " + e.what());
    }
    ck.geometry.validate();
    if (ck.set.n < 0) throw validation_error("checkpoint '" + path + "': negative point count");

    GaussianSet& g = ck.set;
    const std::size_t un = static_cast<std::size_t>(g.n);
    g.positions = read_f32_block(in, un * 3, path);
    g.log_scales = read_f32_block(in, un * g.scale_stride(), path);
    if (g.config.gaussian_rotation == RotationMode::quaternion)
        g.shape_rotations = read_f32_block(in, un * 4, path);
    if (g.config.transform_translation) g.translations = read_f32_block(in, un * 3, path);
    if (g.config.transform_rotation == RotationMode::quaternion)
        g.transform_rotations = read_f32_block(in, un * 4, path);
    g.validate();
    return ck;
}

} // namespace gdir
