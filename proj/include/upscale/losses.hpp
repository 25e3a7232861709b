#pragma once

#include <array>
#include <span>
#include <vector>

#include "upscale/grid.hpp"
#include "upscale/periodic_solver.hpp"

namespace upscale {

/**
 * Network output for one patch: (r+2)^d heads. The interior r^d entries are
 * cell-centered heads; the one-cell ring around them holds periodic ghost
 * heads. Planar images have a single z layer and no ghost ring in z.
 */
class HeadImage
{
public:
    HeadImage() = default;
    HeadImage(int dim, int r);

    int dim() const { return dim_; }
    int r() const { return r_; }
    const std::array<int, 3>& shape() const { return shape_; }
    std::size_t size() const { return values_.size(); }

    double& at(int i, int j, int k) { return values_[index(i, j, k)]; }
    double at(int i, int j, int k) const { return values_[index(i, j, k)]; }
    /// Interior cell (i, j, k) of the patch, 0-based in patch coordinates.
    double& interior(int i, int j, int k) { return at(i + 1, j + 1, k + (dim_ == 3 ? 1 : 0)); }
    double interior(int i, int j, int k) const { return at(i + 1, j + 1, k + (dim_ == 3 ? 1 : 0)); }

    std::span<double> values() { return values_; }
    std::span<const double> values() const { return values_; }

    std::size_t index(int i, int j, int k) const
    {
        return static_cast<std::size_t>(i) + static_cast<std::size_t>(shape_[0]) * (j + static_cast<std::size_t>(shape_[1]) * k);
    }

    /// Interior heads as a field on the patch grid.
    ScalarField interior_field(const GridSpec& patch_grid) const;

    /// Image whose interior is `heads` and whose ghost ring is the periodic image offset by the drive.
    static HeadImage from_periodic(const ScalarField& heads, const PeriodicDrive& drive);

private:
    int dim_ = 2;
    int r_ = 0;
    std::array<int, 3> shape_{0, 0, 1};
    std::vector<double> values_;
};

/*
 * Per-sample loss terms. Each returns the sample's contribution and, when
 * `grad` is non-null, adds scale * d(term)/d(image) into it. Batch losses
 * are means of these over the batch.
 */

/// (1/N_grid) * || interior - label ||^2; the ghost ring is ignored.
double data_term(const HeadImage& pred, const ScalarField& label, HeadImage* grad = nullptr, double scale = 1.0);

/// (1/N_grid) * ||R||^2 with R the TPFA residual at every interior cell.
double ge_term(const HeadImage& pred, const ConductivityField& patch, HeadImage* grad = nullptr, double scale = 1.0);

/// Sum over axes of the mean squared ghost/opposite-edge mismatch (offset by dH).
double bc_head_term(const HeadImage& pred, const PeriodicDrive& drive, HeadImage* grad = nullptr, double scale = 1.0);

/// Sum over axes of the mean squared difference of Darcy velocity on opposite faces.
double bc_flux_term(const HeadImage& pred, const ConductivityField& patch, HeadImage* grad = nullptr,
                    double scale = 1.0);

double loss_data(std::span<const HeadImage> pred, std::span<const ScalarField> labels);
double loss_ge(std::span<const HeadImage> pred, std::span<const Patch> patches);
double loss_bc_head(std::span<const HeadImage> pred, const PeriodicDrive& drive);
double loss_bc_flux(std::span<const HeadImage> pred, std::span<const Patch> patches);

/// TPFA residual per interior cell of an image (ghost ring supplies boundary neighbours).
std::vector<double> image_residual(const HeadImage& pred, const ConductivityField& patch);

} // namespace upscale
