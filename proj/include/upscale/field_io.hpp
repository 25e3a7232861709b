#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "upscale/grid.hpp"

namespace upscale {

/*
 * UPF1 field files: one text header line "UPF1 nx ny nz dx dy dz ncomp",
 * then ncomp per-cell arrays of 64-bit little-endian doubles, x-fastest.
 */
struct FieldData
{
    GridSpec grid;
    std::vector<std::vector<double>> components;
};

void write_upf(std::ostream& out, const FieldData& data);
FieldData read_upf(std::istream& in);

void save_field(const std::filesystem::path& path, const ConductivityField& field);
ConductivityField load_conductivity(const std::filesystem::path& path);
void save_field(const std::filesystem::path& path, const ScalarField& field);
ScalarField load_scalar(const std::filesystem::path& path);

/// Cell table "i,j,k,x,y,z,<name0>,<name1>,..." with cell-center coordinates.
void write_field_csv(std::ostream& out, const FieldData& data, const std::vector<std::string>& names);

} // namespace upscale
