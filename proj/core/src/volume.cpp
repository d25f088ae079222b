#include "semrsa/volume.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "semrsa/binary_format.hpp"
#include "semrsa/error.hpp"

namespace semrsa {

namespace {

constexpr const char* kModule = "searchlight_rsa";

void write_vol1(const std::filesystem::path& path, const Volume& v, const std::string& kind,
                const std::vector<double>& values, bool with_dof) {
    auto out = format::open_output(path, "VOL1");
    nlohmann::json header = {{"magic", "VOL1"},
                             {"dims", {v.grid.nx, v.grid.ny, v.grid.nz}},
                             {"kind", kind},
                             {"metadata", v.metadata}};
    if (with_dof && v.dof) header["dof"] = *v.dof;
    format::write_header(out, header);
    format::write_f32(out, std::span<const double>(values));
}

struct RawVolume {
    nlohmann::json header;
    Grid grid;
    std::vector<float> values;
};

RawVolume read_vol1(const std::filesystem::path& path) {
    auto in = format::open_input(path, "VOL1");
    RawVolume raw;
    raw.header = format::read_header(in, "VOL1", path.string());
    const auto dims = format::field<std::vector<int>>(raw.header, "dims", "VOL1");
    if (dims.size() != 3 || dims[0] <= 0 || dims[1] <= 0 || dims[2] <= 0)
        throw ValidationError(kModule, "VOL1 dims must be three positive integers");
    raw.grid = {dims[0], dims[1], dims[2]};
    raw.values = format::read_f32(in, raw.grid.size(), "VOL1 " + path.string());
    return raw;
}

}  // namespace

Volume Volume::zeros(const Grid& grid, std::vector<std::uint8_t> mask, std::string kind) {
    if (mask.size() != grid.size()) throw DimensionError(kModule, "mask size differs from grid size");
    Volume v;
    v.grid = grid;
    v.values.assign(grid.size(), kOutsideMask);
    for (std::size_t i = 0; i < mask.size(); ++i)
        if (mask[i]) v.values[i] = 0.0;
    v.mask = std::move(mask);
    v.kind = std::move(kind);
    return v;
}

std::size_t Volume::masked_count() const noexcept {
    return static_cast<std::size_t>(std::count_if(mask.begin(), mask.end(), [](std::uint8_t m) { return m != 0; }));
}

Grid grid_for(const std::vector<VoxelCoord>& coords) {
    if (coords.empty()) throw ValidationError(kModule, "no voxel coordinates");
    Grid g{1, 1, 1};
    for (const auto& c : coords) {
        if (c[0] < 0 || c[1] < 0 || c[2] < 0) throw ValidationError(kModule, "negative voxel coordinate");
        g.nx = std::max(g.nx, c[0] + 1);
        g.ny = std::max(g.ny, c[1] + 1);
        g.nz = std::max(g.nz, c[2] + 1);
    }
    return g;
}

std::vector<std::uint8_t> mask_from_coords(const Grid& grid, const std::vector<VoxelCoord>& coords) {
    std::vector<std::uint8_t> mask(grid.size(), 0);
    for (const auto& c : coords) {
        if (!grid.contains(c)) throw ValidationError(kModule, "voxel coordinate outside the grid");
        mask[grid.index(c)] = 1;
    }
    return mask;
}

Volume contrast_maps(const Volume& a, const Volume& b) {
    if (!(a.grid == b.grid)) throw ValidationError(kModule, "contrast_maps: grid mismatch");
    if (a.mask != b.mask) throw ValidationError(kModule, "contrast_maps: mask mismatch");
    Volume out = Volume::zeros(a.grid, a.mask, "difference");
    for (std::size_t i = 0; i < out.values.size(); ++i)
        if (out.mask[i]) out.values[i] = a.values[i] - b.values[i];
    out.metadata = {{"minuend", a.kind}, {"subtrahend", b.kind}};
    return out;
}

void write_volume(const std::filesystem::path& path, const Volume& volume) {
    if (volume.values.size() != volume.grid.size()) throw DimensionError(kModule, "volume size differs from grid");
    write_vol1(path, volume, volume.kind, volume.values, true);
}

void write_mask(const std::filesystem::path& path, const Volume& volume) {
    std::vector<double> values(volume.mask.begin(), volume.mask.end());
    write_vol1(path, volume, "mask", values, false);
}

Volume read_volume(const std::filesystem::path& path, const std::optional<std::filesystem::path>& mask_path) {
    RawVolume raw = read_vol1(path);
    Volume v;
    v.grid = raw.grid;
    v.kind = raw.header.value("kind", std::string{});
    if (raw.header.contains("dof")) v.dof = raw.header["dof"].get<int>();
    v.metadata = raw.header.value("metadata", nlohmann::json::object());
    v.values.assign(raw.values.begin(), raw.values.end());
    if (mask_path) {
        RawVolume m = read_vol1(*mask_path);
        if (!(m.grid == v.grid)) throw ValidationError(kModule, "mask grid differs from volume grid");
        v.mask.resize(m.values.size());
        for (std::size_t i = 0; i < m.values.size(); ++i) v.mask[i] = m.values[i] != 0.0f ? 1 : 0;
    } else {
        v.mask.resize(v.values.size());
        for (std::size_t i = 0; i < v.values.size(); ++i) v.mask[i] = std::isnan(v.values[i]) ? 0 : 1;
    }
    for (std::size_t i = 0; i < v.values.size(); ++i)
        if (!v.mask[i]) v.values[i] = kOutsideMask;
    return v;
}

}  // namespace semrsa
