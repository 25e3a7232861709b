#include "upscale/field_io.hpp"

#include <bit>
#include <cstdint>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

namespace upscale {

void write_upf(std::ostream& out, const FieldData& data)
{
    const GridSpec& g = data.grid;
    for (const auto& c : data.components)
        if (c.size() != g.cells())
            throw DimensionMismatch("field component has " + std::to_string(c.size()) + " values for "
                                    + std::to_string(g.cells()) + " cells");
    std::ostringstream header;
    header.precision(17);
    header << "UPF1 " << g.nx() << " " << g.ny() << " " << g.nz() << " " << g.spacing(0) << " " << g.spacing(1)
           << " " << g.spacing(2) << " " << data.components.size() << "\n";
    out << header.str();
    for (const auto& comp : data.components)
        for (double v : comp) {
            auto bits = std::bit_cast<std::uint64_t>(v);
            char bytes[8];
            for (char& b : bytes) {
                b = static_cast<char>(bits & 0xff);
                bits >>= 8;
            }
            out.write(bytes, 8);
        }
    if (!out)
        throw std::runtime_error("failed to write field data");
}

FieldData read_upf(std::istream& in)
{
    std::string line;
    if (!std::getline(in, line))
        throw std::runtime_error("empty field file");
    std::istringstream header(line);
    std::string magic;
    int nx = 0, ny = 0, nz = 0, ncomp = 0;
    double dx = 0, dy = 0, dz = 0;
    header >> magic >> nx >> ny >> nz >> dx >> dy >> dz >> ncomp;
    if (magic != "UPF1" || !header)
        throw std::runtime_error("not a UPF1 field file");
    if (ncomp < 1)
        throw std::runtime_error("UPF1 file declares no components");
    FieldData data{GridSpec(nx, ny, nz, dx, dy, dz), {}};
    data.components.assign(static_cast<std::size_t>(ncomp), std::vector<double>(data.grid.cells()));
    for (auto& comp : data.components)
        for (double& v : comp) {
            unsigned char bytes[8];
            if (!in.read(reinterpret_cast<char*>(bytes), 8))
                throw std::runtime_error("truncated UPF1 field data");
            std::uint64_t bits = 0;
            for (int b = 7; b >= 0; --b)
                bits = (bits << 8) | bytes[b];
            v = std::bit_cast<double>(bits);
        }
    return data;
}

namespace {

void save(const std::filesystem::path& path, const FieldData& data)
{
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw std::runtime_error("cannot open " + path.string() + " for writing");
    write_upf(out, data);
}

FieldData load(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw std::runtime_error("cannot open " + path.string());
    return read_upf(in);
}

} // namespace

void save_field(const std::filesystem::path& path, const ConductivityField& field)
{
    FieldData d{field.grid(), {}};
    for (int c = 0; c < field.components(); ++c) {
        const auto comp = field.component(c);
        d.components.emplace_back(comp.begin(), comp.end());
    }
    save(path, d);
}

ConductivityField load_conductivity(const std::filesystem::path& path)
{
    FieldData d = load(path);
    return ConductivityField(d.grid, std::move(d.components));
}

void save_field(const std::filesystem::path& path, const ScalarField& field)
{
    const auto v = field.values();
    save(path, FieldData{field.grid(), {std::vector<double>(v.begin(), v.end())}});
}

ScalarField load_scalar(const std::filesystem::path& path)
{
    FieldData d = load(path);
    if (d.components.size() != 1)
        throw DimensionMismatch(path.string() + " holds " + std::to_string(d.components.size())
                                + " components, expected 1");
    return ScalarField(d.grid, std::move(d.components.front()));
}

void write_field_csv(std::ostream& out, const FieldData& data, const std::vector<std::string>& names)
{
    if (names.size() != data.components.size())
        throw DimensionMismatch("one column name per component required");
    const GridSpec& g = data.grid;
    out << "i,j,k,x,y,z";
    for (const auto& n : names)
        out << "," << n;
    out << "\n";
    out.precision(17);
    for (std::size_t c = 0; c < g.cells(); ++c) {
        const auto ijk = g.coords(c);
        out << ijk[0] << "," << ijk[1] << "," << ijk[2];
        for (int a = 0; a < 3; ++a)
            out << "," << g.center(a, ijk[a]);
        for (const auto& comp : data.components)
            out << "," << comp[c];
        out << "\n";
    }
}

} // namespace upscale
