#include "gdir/volume.hpp"

#include "gdir/errors.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

namespace fs = std::filesystem;
using nlohmann::json;

namespace gdir {

void GridMeta::validate() const {
    for (int a = 0; a < 3; ++a)
        if (dims[a] <= 0)
            throw validation_error("grid: non-positive dimension along axis " + std::to_string(a));
    if (!(spacing.x > 0 && spacing.y > 0 && spacing.z > 0))
        throw validation_error("grid: spacing components must be strictly positive");
    if (!spacing.finite() || !origin.finite())
        throw validation_error("grid: non-finite spacing or origin");
}

bool GridMeta::same_grid(const GridMeta& o, double tol) const {
    if (dims != o.dims) return false;
    return (spacing - o.spacing).norm() <= tol && (origin - o.origin).norm() <= tol;
}

void Volume3::validate() const {
    meta.validate();
    if (data.size() != meta.voxel_count())
        throw validation_error("volume: data length " + std::to_string(data.size()) +
                               " does not match dims product " + std::to_string(meta.voxel_count()));
    for (float v : data)
        if (!std::isfinite(v))
            throw validation_error("volume: NaN or infinite intensity value");
}

void MaskVolume::validate() const {
    meta.validate();
    if (data.size() != meta.voxel_count())
        throw validation_error("mask: data length does not match dims product");
    for (int32_t v : data)
        if (v < 0) throw validation_error("mask: negative label value");
}

namespace {

std::string lower_ext(const std::string& path) {
    std::string e = fs::path(path).extension().string();
    std::transform(e.begin(), e.end(), e.begin(), [](unsigned char c) { return std::tolower(c); });
    return e;
}

std::string sidecar_path(const std::string& path) {
    fs::path p(path);
    p.replace_extension(".json");
    return p.string();
}

std::string payload_path(const std::string& path) {
    fs::path p(path);
    p.replace_extension(".raw");
    return p.string();
}

std::vector<char> read_binary(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw io_error("cannot open '" + path + "'");
    in.seekg(0, std::ios::end);
    const auto size = in.tellg();
    in.seekg(0, std::ios::beg);
    std::vector<char> buf(static_cast<std::size_t>(size));
    in.read(buf.data(), size);
    if (!in) throw io_error("short read on '" + path + "'");
    return buf;
}

void write_binary(const std::string& path, const void* data, std::size_t bytes) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw io_error("cannot open '" + path + "' for writing");
    out.write(static_cast<const char*>(data), static_cast<std::streamsize>(bytes));
    if (!out) throw io_error("write failed on '" + path + "'");
}

struct MhdHeader {
    int ndims = 0;
    std::array<int, 3> dims{0, 0, 0};
    Vec3 spacing{1, 1, 1};
    Vec3 origin{0, 0, 0};
    std::string element_type;
    std::string data_file;
    std::size_t header_bytes = 0; // offset of LOCAL payload in .mha
};

std::string trim(const std::string& s) {
    auto b = s.find_first_not_of(" \t\r\n");
    auto e = s.find_last_not_of(" \t\r\n");
    return b == std::string::npos ? "" : s.substr(b, e - b + 1);
}

template <typename T>
std::vector<T> parse_numbers(const std::string& key, const std::string& value, std::size_t expect) {
    std::istringstream iss(value);
    std::vector<T> out;
    T v;
    while (iss >> v) out.push_back(v);
    if (out.size() != expect)
        throw parse_error("metaimage: key '" + key + "' expects " + std::to_string(expect) +
                          " values, got '" + value + "'");
    return out;
}

MhdHeader parse_mhd_header(const std::string& path, const std::vector<char>& raw) {
    MhdHeader h;
    std::size_t pos = 0;
    bool have_dimsize = false;
    while (pos < raw.size()) {
        auto eol = std::find(raw.begin() + pos, raw.end(), '\n');
        std::string line(raw.begin() + pos, eol);
        pos = static_cast<std::size_t>(eol - raw.begin()) + (eol == raw.end() ? 0 : 1);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw parse_error("metaimage: malformed header line '" + line + "'");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));

        if (key == "ObjectType") {
            if (value != "Image") throw parse_error("metaimage: key 'ObjectType' must be Image");
        } else if (key == "NDims") {
            h.ndims = std::stoi(value);
            if (h.ndims != 3)
                throw parse_error("metaimage: key 'NDims' must be 3, got " + value);
        } else if (key == "DimSize") {
            auto v = parse_numbers<int>(key, value, 3);
            h.dims = {v[0], v[1], v[2]};
            have_dimsize = true;
        } else if (key == "ElementSpacing") {
            auto v = parse_numbers<double>(key, value, 3);
            h.spacing = {v[0], v[1], v[2]};
        } else if (key == "Offset" || key == "Position" || key == "Origin") {
            auto v = parse_numbers<double>(key, value, 3);
            h.origin = {v[0], v[1], v[2]};
        } else if (key == "ElementType") {
            h.element_type = value;
        } else if (key == "ElementDataFile") {
            h.data_file = value;
            if (value == "LOCAL") h.header_bytes = pos;
            break; // per spec, ElementDataFile terminates the header
        } else if (key == "BinaryDataByteOrderMSB" || key == "ElementByteOrderMSB") {
            if (value == "True" || value == "true" || value == "1")
                throw parse_error("metaimage: key '" + key + "': big-endian payloads unsupported");
        } else if (key == "CompressedData") {
            if (value == "True" || value == "true" || value == "1")
                throw parse_error("metaimage: key 'CompressedData': compression unsupported");
        } else if (key == "BinaryData" || key == "ElementNumberOfChannels" ||
                   key == "TransformMatrix" || key == "CenterOfRotation" ||
                   key == "AnatomicalOrientation") {
            // accepted but unused
        } else {
            std::cerr << "warning: metaimage '" << path << "': ignoring unknown key '" << key
                      << "'\n";
        }
    }
    if (h.ndims == 0) throw parse_error("metaimage: missing key 'NDims'");
    if (!have_dimsize) throw parse_error("metaimage: missing key 'DimSize'");
    if (h.element_type.empty()) throw parse_error("metaimage: missing key 'ElementType'");
    if (h.data_file.empty()) throw parse_error("metaimage: missing key 'ElementDataFile'");
    return h;
}

std::size_t element_size(const std::string& element_type) {
    if (element_type == "MET_UCHAR") return 1;
    if (element_type == "MET_SHORT") return 2;
    if (element_type == "MET_FLOAT") return 4;
    throw parse_error("metaimage: key 'ElementType': unsupported type '" + element_type +
                      "' (supported: MET_UCHAR, MET_SHORT, MET_FLOAT)");
}

std::vector<float> decode_elements(const char* bytes, std::size_t count, const std::string& type) {
    std::vector<float> out(count);
    if (type == "MET_UCHAR") {
        for (std::size_t i = 0; i < count; ++i)
            out[i] = static_cast<float>(static_cast<const unsigned char*>(
                static_cast<const void*>(bytes))[i]);
    } else if (type == "MET_SHORT") {
        for (std::size_t i = 0; i < count; ++i) {
            int16_t v;
            std::memcpy(&v, bytes + 2 * i, 2);
            out[i] = static_cast<float>(v);
        }
    } else { // MET_FLOAT
        std::memcpy(out.data(), bytes, 4 * count);
    }
    return out;
}

Volume3 load_metaimage(const std::string& path) {
    const auto raw = read_binary(path);
    const MhdHeader h = parse_mhd_header(path, raw);

    GridMeta meta{h.dims, h.spacing, h.origin};
    meta.validate();
    const std::size_t count = meta.voxel_count();
    const std::size_t elem = element_size(h.element_type);
    const std::size_t need = count * elem;

    Volume3 v;
    v.meta = meta;
    if (h.data_file == "LOCAL") {
        if (raw.size() - h.header_bytes != need)
            throw validation_error("metaimage: payload is " +
                                   std::to_string(raw.size() - h.header_bytes) +
                                   " bytes, expected " + std::to_string(need));
        v.data = decode_elements(raw.data() + h.header_bytes, count, h.element_type);
    } else {
        fs::path data_path = fs::path(path).parent_path() / h.data_file;
        const auto payload = read_binary(data_path.string());
        if (payload.size() != need)
            throw validation_error("metaimage: data file '" + h.data_file + "' is " +
                                   std::to_string(payload.size()) + " bytes, expected " +
                                   std::to_string(need));
        v.data = decode_elements(payload.data(), count, h.element_type);
    }
    v.validate();
    return v;
}

GridMeta meta_from_json(const json& j, const std::string& path) {
    GridMeta m;
    try {
        const auto& d = j.at("dims");
        const auto& s = j.at("spacing");
        const auto& o = j.at("origin");
        for (int a = 0; a < 3; ++a) {
            m.dims[a] = d.at(a).get<int>();
            m.spacing[a] = s.at(a).get<double>();
            m.origin[a] = o.at(a).get<double>();
        }
    } catch (const json::exception& e) {
        throw parse_error("sidecar '" + path + "': " + e.what());
    }
    m.validate();
    return m;
}

json meta_to_json(const GridMeta& m) {
    return json{{"dims", {m.dims[0], m.dims[1], m.dims[2]}},
                {"spacing", {m.spacing.x, m.spacing.y, m.spacing.z}},
                {"origin", {m.origin.x, m.origin.y, m.origin.z}}};
}

// Shared raw+json reader for volumes (1 component) and DVFs (3 components).
DvfData load_raw_json(const std::string& path, int expect_components) {
    const std::string side = sidecar_path(path);
    std::ifstream js(side);
    if (!js) throw io_error("cannot open sidecar '" + side + "'");
    json j;
    try {
        js >> j;
    } catch (const json::exception& e) {
        throw parse_error("sidecar '" + side + "': " + e.what());
    }
    DvfData out;
    out.meta = meta_from_json(j, side);
    out.components = j.value("components", 1);
    if (expect_components > 0 && out.components != expect_components)
        throw validation_error("sidecar '" + side + "': expected " +
                               std::to_string(expect_components) + " components, got " +
                               std::to_string(out.components));

    const auto payload = read_binary(payload_path(path));
    const std::size_t expect_bytes = out.meta.voxel_count() * out.components * 4;
    if (payload.size() != expect_bytes)
        throw validation_error("payload '" + payload_path(path) + "' is " +
                               std::to_string(payload.size()) + " bytes, sidecar implies " +
                               std::to_string(expect_bytes));
    out.values.resize(out.meta.voxel_count() * out.components);
    std::memcpy(out.values.data(), payload.data(), payload.size());
    return out;
}

void write_raw_json(std::span<const float> values, const GridMeta& meta, int components,
                    const std::string& path) {
    meta.validate();
    if (values.size() != meta.voxel_count() * components)
        throw validation_error("field length does not match dims product");
    json j = meta_to_json(meta);
    j["components"] = components;
    j["dtype"] = "float32_le";
    j["order"] = "x-fastest";
    std::ofstream js(sidecar_path(path));
    if (!js) throw io_error("cannot open sidecar '" + sidecar_path(path) + "' for writing");
    js << j.dump(2) << "\n";
    if (!js) throw io_error("write failed on sidecar '" + sidecar_path(path) + "'");
    write_binary(payload_path(path), values.data(), values.size() * 4);
}

} // namespace

VolumeFormat detect_volume_format(const std::string& path) {
    const std::string e = lower_ext(path);
    if (e == ".mhd" || e == ".mha") return VolumeFormat::metaimage;
    if (e == ".json" || e == ".raw") return VolumeFormat::raw_json;
    throw validation_error("cannot infer volume format from extension of '" + path + "'");
}

Volume3 load_volume(const std::string& path, VolumeFormat format) {
    if (format == VolumeFormat::metaimage) return load_metaimage(path);
    DvfData d = load_raw_json(path, 1);
    Volume3 v;
    v.meta = d.meta;
    v.data = std::move(d.values);
    v.validate();
    return v;
}

Volume3 load_volume(const std::string& path) {
    return load_volume(path, detect_volume_format(path));
}

MaskVolume load_mask(const std::string& path) {
    const Volume3 v = load_volume(path);
    MaskVolume m;
    m.meta = v.meta;
    m.data.resize(v.data.size());
    for (std::size_t i = 0; i < v.data.size(); ++i) {
        const float f = v.data[i];
        const double r = std::round(f);
        if (std::abs(f - r) > 1e-4 || r < 0)
            throw validation_error("mask '" + path + "': voxel value " + std::to_string(f) +
                                   " is not a non-negative integer label");
        m.data[i] = static_cast<int32_t>(r);
    }
    m.validate();
    return m;
}

void write_volume(const Volume3& v, const std::string& path) {
    write_raw_json(v.data, v.meta, 1, path);
}

namespace {

// Per-axis clamped cell lookup: cell index c in [0, dim-2], in-cell fraction
// f in [0,1], and whether the raw coordinate fell outside the grid.
inline void cell_coord(double u, int dim, int& c, double& f, bool& outside) {
    outside = u < 0.0 || u > static_cast<double>(dim - 1);
    if (dim == 1) {
        c = 0;
        f = 0.0;
        return;
    }
    double uc = std::clamp(u, 0.0, static_cast<double>(dim - 1));
    c = static_cast<int>(uc);
    if (c > dim - 2) c = dim - 2;
    f = uc - c;
}

} // namespace

double sample_trilinear(const Volume3& v, const Vec3& p) {
    const GridMeta& g = v.meta;
    int cx, cy, cz;
    double fx, fy, fz;
    bool ox, oy, oz;
    cell_coord((p.x - g.origin.x) / g.spacing.x, g.dims[0], cx, fx, ox);
    cell_coord((p.y - g.origin.y) / g.spacing.y, g.dims[1], cy, fy, oy);
    cell_coord((p.z - g.origin.z) / g.spacing.z, g.dims[2], cz, fz, oz);

    const int x1 = g.dims[0] == 1 ? 0 : cx + 1;
    const int y1 = g.dims[1] == 1 ? 0 : cy + 1;
    const int z1 = g.dims[2] == 1 ? 0 : cz + 1;

    const double c000 = v.at(cx, cy, cz), c100 = v.at(x1, cy, cz);
    const double c010 = v.at(cx, y1, cz), c110 = v.at(x1, y1, cz);
    const double c001 = v.at(cx, cy, z1), c101 = v.at(x1, cy, z1);
    const double c011 = v.at(cx, y1, z1), c111 = v.at(x1, y1, z1);

    const double c00 = c000 + fx * (c100 - c000);
    const double c10 = c010 + fx * (c110 - c010);
    const double c01 = c001 + fx * (c101 - c001);
    const double c11 = c011 + fx * (c111 - c011);
    const double c0 = c00 + fy * (c10 - c00);
    const double c1 = c01 + fy * (c11 - c01);
    return c0 + fz * (c1 - c0);
}

Vec3 sample_gradient(const Volume3& v, const Vec3& p) {
    const GridMeta& g = v.meta;
    int cx, cy, cz;
    double fx, fy, fz;
    bool ox, oy, oz;
    cell_coord((p.x - g.origin.x) / g.spacing.x, g.dims[0], cx, fx, ox);
    cell_coord((p.y - g.origin.y) / g.spacing.y, g.dims[1], cy, fy, oy);
    cell_coord((p.z - g.origin.z) / g.spacing.z, g.dims[2], cz, fz, oz);

    const int x1 = g.dims[0] == 1 ? 0 : cx + 1;
    const int y1 = g.dims[1] == 1 ? 0 : cy + 1;
    const int z1 = g.dims[2] == 1 ? 0 : cz + 1;

    const double c000 = v.at(cx, cy, cz), c100 = v.at(x1, cy, cz);
    const double c010 = v.at(cx, y1, cz), c110 = v.at(x1, y1, cz);
    const double c001 = v.at(cx, cy, z1), c101 = v.at(x1, cy, z1);
    const double c011 = v.at(cx, y1, z1), c111 = v.at(x1, y1, z1);

    // d/dfx, then d/dfy, d/dfz of the trilinear blend.
    const double gx = (1 - fy) * (1 - fz) * (c100 - c000) + fy * (1 - fz) * (c110 - c010) +
                      (1 - fy) * fz * (c101 - c001) + fy * fz * (c111 - c011);
    const double gy = (1 - fx) * (1 - fz) * (c010 - c000) + fx * (1 - fz) * (c110 - c100) +
                      (1 - fx) * fz * (c011 - c001) + fx * fz * (c111 - c101);
    const double gz = (1 - fx) * (1 - fy) * (c001 - c000) + fx * (1 - fy) * (c101 - c100) +
                      (1 - fx) * fy * (c011 - c010) + fx * fy * (c111 - c110);

    return {ox ? 0.0 : gx / g.spacing.x, oy ? 0.0 : gy / g.spacing.y, oz ? 0.0 : gz / g.spacing.z};
}

int32_t sample_nearest(const MaskVolume& m, const Vec3& p) {
    const GridMeta& g = m.meta;
    int ix = static_cast<int>(std::lround((p.x - g.origin.x) / g.spacing.x));
    int iy = static_cast<int>(std::lround((p.y - g.origin.y) / g.spacing.y));
    int iz = static_cast<int>(std::lround((p.z - g.origin.z) / g.spacing.z));
    ix = std::clamp(ix, 0, g.dims[0] - 1);
    iy = std::clamp(iy, 0, g.dims[1] - 1);
    iz = std::clamp(iz, 0, g.dims[2] - 1);
    return m.at(ix, iy, iz);
}

void write_dvf(std::span<const float> field, const GridMeta& meta, const std::string& path) {
    write_raw_json(field, meta, 3, path);
}

DvfData read_dvf(const std::string& path) { return load_raw_json(path, 3); }

LandmarkSet load_landmarks(const std::string& path, LandmarkUnits units, const GridMeta& ref) {
    std::ifstream in(path);
    if (!in) throw io_error("cannot open landmarks '" + path + "'");
    LandmarkSet set;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        std::string s = trim(line);
        if (s.empty()) continue;
        for (char& c : s)
            if (c == ',' || c == ';' || c == '\t') c = ' ';
        std::istringstream iss(s);
        double a, b, c;
        if (!(iss >> a >> b >> c)) {
            if (line_no == 1 && set.points.empty()) continue; // optional header row
            throw parse_error("landmarks '" + path + "': non-numeric row at line " +
                              std::to_string(line_no));
        }
        Vec3 p{a, b, c};
        if (!p.finite())
            throw validation_error("landmarks '" + path + "': non-finite coordinate at line " +
                                   std::to_string(line_no));
        if (units == LandmarkUnits::voxels)
            p = {ref.origin.x + p.x * ref.spacing.x, ref.origin.y + p.y * ref.spacing.y,
                 ref.origin.z + p.z * ref.spacing.z};
        set.points.push_back(p);
    }
    return set;
}

void write_landmarks(const LandmarkSet& set, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw io_error("cannot open '" + path + "' for writing");
    out.precision(17);
    for (const Vec3& p : set.points) out << p.x << "," << p.y << "," << p.z << "\n";
    if (!out) throw io_error("write failed on '" + path + "'");
}

} // namespace gdir
