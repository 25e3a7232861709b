#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace upscale {

/// Raised when grid sizes and upscaling ratios do not line up.
class DimensionMismatch : public std::invalid_argument
{
public:
    using std::invalid_argument::invalid_argument;
};

/// Axis labels used in messages and CSV headers.
inline constexpr std::array<char, 3> kAxisName{'x', 'y', 'z'};

/**
 * Structured, uniformly spaced grid. Cells are ordered x-fastest, then y,
 * then z. A 2D grid is a 3D grid with nz == 1.
 */
class GridSpec
{
public:
    GridSpec() = default;
    GridSpec(int nx, int ny, int nz, double dx, double dy, double dz);

    /// 2D convenience constructor (nz = 1, dz = 1).
    static GridSpec planar(int nx, int ny, double dx = 1.0, double dy = 1.0)
    {
        return GridSpec(nx, ny, 1, dx, dy, 1.0);
    }

    int n(int axis) const { return counts_[axis]; }
    double spacing(int axis) const { return spacing_[axis]; }
    double length(int axis) const { return counts_[axis] * spacing_[axis]; }
    const std::array<int, 3>& counts() const { return counts_; }
    const std::array<double, 3>& spacings() const { return spacing_; }

    int nx() const { return counts_[0]; }
    int ny() const { return counts_[1]; }
    int nz() const { return counts_[2]; }

    bool is2d() const { return counts_[2] == 1; }
    /// Number of active axes: 2 for planar grids, 3 otherwise.
    int dim() const { return is2d() ? 2 : 3; }
    std::size_t cells() const
    {
        return static_cast<std::size_t>(counts_[0]) * counts_[1] * counts_[2];
    }

    std::size_t index(int i, int j, int k) const
    {
        return static_cast<std::size_t>(i)
            + static_cast<std::size_t>(counts_[0]) * (j + static_cast<std::size_t>(counts_[1]) * k);
    }
    std::array<int, 3> coords(std::size_t idx) const;

    /// Area of a face normal to `axis`. In 2D the depth is taken as dz.
    double face_area(int axis) const;
    double cell_volume() const { return spacing_[0] * spacing_[1] * spacing_[2]; }

    /// Cell-center coordinate along an axis (origin at the low corner).
    double center(int axis, int i) const { return (i + 0.5) * spacing_[axis]; }

    bool operator==(const GridSpec&) const = default;

private:
    std::array<int, 3> counts_{1, 1, 1};
    std::array<double, 3> spacing_{1.0, 1.0, 1.0};
};

std::string describe(const GridSpec& grid);

/// Integer upscaling ratio per axis.
struct Ratio
{
    std::array<int, 3> r{1, 1, 1};

    static Ratio uniform(int value, const GridSpec& grid)
    {
        return Ratio{{value, value, grid.is2d() ? 1 : value}};
    }
    int operator[](int axis) const { return r[axis]; }
    bool operator==(const Ratio&) const = default;
};

/// Coarse grid obtained by dividing `fine` by `ratio`; throws DimensionMismatch.
GridSpec coarsen(const GridSpec& fine, const Ratio& ratio);

/// Per-cell scalar values (heads, log-conductivity, ...).
class ScalarField
{
public:
    ScalarField() = default;
    ScalarField(GridSpec grid, std::vector<double> values);
    static ScalarField constant(const GridSpec& grid, double value)
    {
        return ScalarField(grid, std::vector<double>(grid.cells(), value));
    }

    const GridSpec& grid() const { return grid_; }
    std::span<const double> values() const { return values_; }
    double operator[](std::size_t i) const { return values_[i]; }
    std::size_t size() const { return values_.size(); }

private:
    GridSpec grid_;
    std::vector<double> values_;
};

/**
 * Diagonal hydraulic conductivity per cell. Planar fields carry Kx and Ky,
 * 3D fields also Kz. Every value is strictly positive and finite.
 */
class ConductivityField
{
public:
    ConductivityField() = default;
    ConductivityField(GridSpec grid, std::vector<std::vector<double>> components);

    static ConductivityField isotropic(const GridSpec& grid, std::vector<double> k);
    static ConductivityField uniform(const GridSpec& grid, double k);

    const GridSpec& grid() const { return grid_; }
    int components() const { return static_cast<int>(comp_.size()); }
    std::span<const double> component(int axis) const { return comp_.at(axis); }
    double k(int axis, std::size_t cell) const { return comp_[axis][cell]; }

    double min_value() const;
    double max_value() const;

private:
    GridSpec grid_;
    std::vector<std::vector<double>> comp_;
};

/// One coarse block of a fine field.
struct Patch
{
    std::array<int, 3> coarse_index{0, 0, 0};
    ConductivityField field;
};

/// Upscaled conductivity tensor of a coarse block (dim x dim is used).
struct EquivalentTensor
{
    int dim = 2;
    Eigen::Matrix3d matrix = Eigen::Matrix3d::Zero();

    double operator()(int i, int j) const { return matrix(i, j); }
    double max_abs() const { return matrix.topLeftCorner(dim, dim).cwiseAbs().maxCoeff(); }
};

struct CoarseModel
{
    GridSpec coarse_grid;
    Ratio ratio;
    std::vector<EquivalentTensor> tensors;
};

/// Cuts a field into ratio-sized blocks, ordered x-fastest over the coarse grid.
std::vector<Patch> partition(const ConductivityField& field, const Ratio& ratio);

/// Inverse of partition: stitches patches back onto the fine grid.
ConductivityField reassemble(std::span<const Patch> patches, const GridSpec& fine, const Ratio& ratio);

/// Arithmetic mean of each ratio-sized block.
ScalarField block_average(const ScalarField& values, const Ratio& ratio);

/// Builds a diagonal conductivity field from the tensor diagonals of a coarse model.
ConductivityField diagonal_field(const CoarseModel& model);

/// Swaps two axes of a patch-sized field (cells and component labels).
ConductivityField swap_axes(const ConductivityField& field, int a, int b);
ScalarField swap_axes(const ScalarField& field, int a, int b);

} // namespace upscale
