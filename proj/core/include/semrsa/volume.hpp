#pragma once

#include <cstdint>
#include <filesystem>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "semrsa/dataset.hpp"

namespace semrsa {

/// Voxel grid with x-fastest linear indexing.
struct Grid {
    int nx = 0, ny = 0, nz = 0;

    std::size_t size() const noexcept {
        return static_cast<std::size_t>(nx) * static_cast<std::size_t>(ny) * static_cast<std::size_t>(nz);
    }
    bool contains(const VoxelCoord& c) const noexcept {
        return c[0] >= 0 && c[1] >= 0 && c[2] >= 0 && c[0] < nx && c[1] < ny && c[2] < nz;
    }
    std::size_t index(const VoxelCoord& c) const noexcept {
        return static_cast<std::size_t>(c[0]) +
               static_cast<std::size_t>(nx) * (static_cast<std::size_t>(c[1]) +
                                               static_cast<std::size_t>(ny) * static_cast<std::size_t>(c[2]));
    }
    VoxelCoord coord(std::size_t index) const noexcept {
        const auto sx = static_cast<std::size_t>(nx), sy = static_cast<std::size_t>(ny);
        return {static_cast<int>(index % sx), static_cast<int>((index / sx) % sy), static_cast<int>(index / (sx * sy))};
    }
    friend bool operator==(const Grid&, const Grid&) = default;
};

/// Value stored outside the analysis mask.
inline constexpr double kOutsideMask = std::numeric_limits<double>::quiet_NaN();

/// Scalar grid with an inclusion mask. Values are finite (or a signed
/// infinity sentinel for degenerate t values) where the mask is set.
struct Volume {
    Grid grid;
    std::vector<std::uint8_t> mask;
    std::vector<double> values;
    std::string kind;
    std::optional<int> dof;
    nlohmann::json metadata = nlohmann::json::object();

    /// Zero inside `mask`, kOutsideMask elsewhere.
    static Volume zeros(const Grid& grid, std::vector<std::uint8_t> mask, std::string kind);

    std::size_t masked_count() const noexcept;
    double at(const VoxelCoord& c) const { return values[grid.index(c)]; }
    double& at(const VoxelCoord& c) { return values[grid.index(c)]; }
};

/// Smallest grid that holds every coordinate; negative coordinates are rejected.
Grid grid_for(const std::vector<VoxelCoord>& coords);
std::vector<std::uint8_t> mask_from_coords(const Grid& grid, const std::vector<VoxelCoord>& coords);

/// Voxel-wise a - b on the shared mask.
Volume contrast_maps(const Volume& a, const Volume& b);

/// VOL1: JSON header {magic, dims, kind, dof?, metadata} + float32 values,
/// x fastest. The mask is a parallel VOL1 of kind "mask" holding {0, 1}.
void write_volume(const std::filesystem::path& path, const Volume& volume);
void write_mask(const std::filesystem::path& path, const Volume& volume);
/// Without a mask file the mask is every non-NaN voxel.
Volume read_volume(const std::filesystem::path& path, const std::optional<std::filesystem::path>& mask_path = {});

}  // namespace semrsa
