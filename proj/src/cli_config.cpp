#include "gdir/cli_config.hpp"

#include "gdir/errors.hpp"

#include <nlohmann/json.hpp>

#include <fstream>
#include <sstream>

using nlohmann::json;

namespace gdir {

TrainConfig train_preset(const std::string& name) {
    if (name == "dirlab") return TrainConfig::preset_dirlab();
    if (name == "acdc") return TrainConfig::preset_acdc();
    throw validation_error("unknown preset '" + name + "' (expected dirlab or acdc)");
}

namespace {

double to_double(const std::string& key, const std::string& value) {
    try {
        std::size_t pos = 0;
        const double d = std::stod(value, &pos);
        if (pos != value.size()) throw std::invalid_argument(value);
        return d;
    } catch (const std::exception&) {
        throw parse_error("config key '" + key + "': bad numeric value '" + value + "'");
    }
}

long to_long(const std::string& key, const std::string& value) {
    try {
        std::size_t pos = 0;
        const long v = std::stol(value, &pos);
        if (pos != value.size()) throw std::invalid_argument(value);
        return v;
    } catch (const std::exception&) {
        throw parse_error("config key '" + key + "': bad integer value '" + value + "'");
    }
}

bool to_bool(const std::string& key, const std::string& value) {
    if (value == "true" || value == "1") return true;
    if (value == "false" || value == "0") return false;
    throw parse_error("config key '" + key + "': bad boolean value '" + value + "'");
}

std::string strip(const std::string& s) {
    auto b = s.find_first_not_of(" \t\r\n\"");
    auto e = s.find_last_not_of(" \t\r\n\"");
    return b == std::string::npos ? "" : s.substr(b, e - b + 1);
}

} // namespace

void apply_config_key(TrainConfig& cfg, const std::string& key, const std::string& value) {
    if (key == "iterations") cfg.iterations = static_cast<int>(to_long(key, value));
    else if (key == "batch_size") cfg.batch_size = static_cast<int>(to_long(key, value));
    else if (key == "k") cfg.k = static_cast<int>(to_long(key, value));
    else if (key == "grid_shape") {
        std::string v = value;
        for (char& c : v)
            if (c == ',' || c == 'x' || c == '[' || c == ']') c = ' ';
        std::istringstream iss(v);
        int a, b, c;
        if (!(iss >> a >> b >> c))
            throw parse_error("config key 'grid_shape': expected three integers, got '" + value +
                              "'");
        cfg.grid_shape = {a, b, c};
    } else if (key == "dof") cfg.dof = DofConfig::from_name(strip(value));
    else if (key == "lr_position") cfg.lr_position = to_double(key, value);
    else if (key == "lr_scale") cfg.lr_scale = to_double(key, value);
    else if (key == "lr_translation") cfg.lr_translation = to_double(key, value);
    else if (key == "lr_rotation") cfg.lr_rotation = to_double(key, value);
    else if (key == "warmup_fraction") cfg.warmup_fraction = to_double(key, value);
    else if (key == "adam_beta1") cfg.adam_beta1 = to_double(key, value);
    else if (key == "adam_beta2") cfg.adam_beta2 = to_double(key, value);
    else if (key == "adam_eps") cfg.adam_eps = to_double(key, value);
    else if (key == "densify") cfg.densify = to_bool(key, value);
    else if (key == "densify_interval") cfg.densify_interval = static_cast<int>(to_long(key, value));
    else if (key == "densify_start_fraction") cfg.densify_start_fraction = to_double(key, value);
    else if (key == "densify_stop_fraction") cfg.densify_stop_fraction = to_double(key, value);
    else if (key == "tau_max") cfg.tau_max = to_double(key, value);
    else if (key == "tau_min") cfg.tau_min = to_double(key, value);
    else if (key == "tau_rel_hi") cfg.tau_rel_hi = to_double(key, value);
    else if (key == "tau_rel_lo") cfg.tau_rel_lo = to_double(key, value);
    else if (key == "clone_inherit_moments") cfg.clone_inherit_moments = to_bool(key, value);
    else if (key == "n_min") cfg.n_min = static_cast<int>(to_long(key, value));
    else if (key == "n_max") cfg.n_max = static_cast<int>(to_long(key, value));
    else if (key == "knn_refresh_interval")
        cfg.knn_refresh_interval = static_cast<int>(to_long(key, value));
    else if (key == "seed") cfg.seed = static_cast<uint64_t>(to_long(key, value));
    else throw parse_error("config: unknown key '" + key + "'");
}

void apply_config_file(TrainConfig& cfg, const std::string& path) {
    std::ifstream in(path);
    if (!in) throw io_error("cannot open config '" + path + "'");
    std::stringstream buf;
    buf << in.rdbuf();
    const std::string text = buf.str();

    const auto first = text.find_first_not_of(" \t\r\n");
    if (first != std::string::npos && text[first] == '{') {
        json j;
        try {
            j = json::parse(text);
        } catch (const json::exception& e) {
            throw parse_error("config '" + path + "': " + e.what());
        }
        for (const auto& [key, value] : j.items()) {
            std::string v;
            if (value.is_string()) v = value.get<std::string>();
            else if (value.is_array()) {
                // grid_shape as [a, b, c]
                std::ostringstream oss;
                for (std::size_t i = 0; i < value.size(); ++i)
                    oss << (i ? " " : "") << value[i].dump();
                v = oss.str();
            } else v = value.dump();
            apply_config_key(cfg, key, v);
        }
        return;
    }

    std::istringstream lines(text);
    std::string line;
    int line_no = 0;
    while (std::getline(lines, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        const std::string s = strip(line);
        if (s.empty()) continue;
        const auto eq = s.find('=');
        if (eq == std::string::npos)
            throw parse_error("config '" + path + "' line " + std::to_string(line_no) +
                              ": expected key = value");
        apply_config_key(cfg, strip(s.substr(0, eq)), strip(s.substr(eq + 1)));
    }
}

void write_case_manifest(const std::string& path, const AnalyticField& field, double magnitude,
                         const GridMeta& geometry, int n_landmarks, uint64_t seed) {
    json j{{"kind", warp_kind_name(field.kind)},
           {"magnitude", magnitude},
           {"seed", seed},
           {"n_landmarks", n_landmarks},
           {"dims", {geometry.dims[0], geometry.dims[1], geometry.dims[2]}},
           {"spacing", {geometry.spacing.x, geometry.spacing.y, geometry.spacing.z}},
           {"origin", {geometry.origin.x, geometry.origin.y, geometry.origin.z}}};
    switch (field.kind) {
    case WarpKind::constant_shift:
        j["shift"] = {field.shift.x, field.shift.y, field.shift.z};
        break;
    case WarpKind::affine: {
        j["linear"] = field.linear.m;
        j["offset"] = {field.offset.x, field.offset.y, field.offset.z};
        break;
    }
    case WarpKind::gaussian_bumps: {
        json bumps = json::array();
        for (const auto& b : field.bumps)
            bumps.push_back({{"center", {b.center.x, b.center.y, b.center.z}},
                             {"direction", {b.direction.x, b.direction.y, b.direction.z}},
                             {"radius", b.radius}});
        j["bumps"] = bumps;
        break;
    }
    }
    std::ofstream out(path);
    if (!out) throw io_error("cannot open manifest '" + path + "' for writing");
    out << j.dump(2) << "\n";
    if (!out) throw io_error("write failed on manifest '" + path + "'");
}

AnalyticField read_case_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw io_error("cannot open manifest '" + path + "'");
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw parse_error("manifest '" + path + "': " + e.what());
    }
    AnalyticField f;
    try {
        f.kind = warp_kind_from_name(j.at("kind").get<std::string>());
        switch (f.kind) {
        case WarpKind::constant_shift:
            for (int a = 0; a < 3; ++a) f.shift[a] = j.at("shift").at(a).get<double>();
            break;
        case WarpKind::affine:
            for (int i = 0; i < 9; ++i) f.linear.m[i] = j.at("linear").at(i).get<double>();
            for (int a = 0; a < 3; ++a) f.offset[a] = j.at("offset").at(a).get<double>();
            break;
        case WarpKind::gaussian_bumps:
            for (const auto& jb : j.at("bumps")) {
                AnalyticField::Bump b;
                for (int a = 0; a < 3; ++a) {
                    b.center[a] = jb.at("center").at(a).get<double>();
                    b.direction[a] = jb.at("direction").at(a).get<double>();
                }
                b.radius = jb.at("radius").get<double>();
                f.bumps.push_back(b);
            }
            break;
        }
    } catch (const json::exception& e) {
        throw parse_error("manifest '" + path + "': " + e.what());
    }
    return f;
}

} // namespace gdir
