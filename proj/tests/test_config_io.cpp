#include <gtest/gtest.h>

#include <filesystem>
#include <sstream>

#include "test_support.hpp"
#include "upscale/config.hpp"
#include "upscale/field_io.hpp"
#include "upscale/workflow.hpp"

using namespace upscale;

TEST(Upf, RoundTripsBitForBit)
{
    const GridSpec g(3, 2, 2, 0.5, 1.0 / 3.0, 7.0);
    const auto f = upscale::fixtures::random_anisotropic(g, 4);
    FieldData d{g, {}};
    for (int c = 0; c < 3; ++c)
        d.components.emplace_back(f.component(c).begin(), f.component(c).end());
    std::stringstream buf;
    write_upf(buf, d);
    const FieldData back = read_upf(buf);
    EXPECT_EQ(back.grid, g);
    EXPECT_EQ(back.components, d.components);
}

TEST(Upf, RejectsBadInput)
{
    std::stringstream bad("XXXX 1 1 1 1 1 1 1\n");
    EXPECT_THROW(read_upf(bad), std::runtime_error);
    std::stringstream truncated("UPF1 2 2 1 1 1 1 1\nabc");
    EXPECT_THROW(read_upf(truncated), std::runtime_error);
}

TEST(Upf, FileHelpersRoundTrip)
{
    const auto dir = std::filesystem::temp_directory_path() / "upscale_config_io_test";
    std::filesystem::create_directories(dir);
    const GridSpec g = GridSpec::planar(4, 3, 2.0, 1.0);
    const auto f = upscale::fixtures::random_lognormal(g, 9);
    save_field(dir / "k.upf", f);
    const auto k = load_conductivity(dir / "k.upf");
    EXPECT_EQ(k.grid(), g);
    for (std::size_t c = 0; c < g.cells(); ++c)
        EXPECT_EQ(k.k(1, c), f.k(1, c));
    const ScalarField s(g, std::vector<double>(g.cells(), 1.25));
    save_field(dir / "s.upf", s);
    EXPECT_EQ(load_scalar(dir / "s.upf")[5], 1.25);
    EXPECT_THROW(load_scalar(dir / "missing.upf"), std::runtime_error);
    std::filesystem::remove_all(dir);
}

TEST(FieldCsv, HasHeaderAndOneRowPerCell)
{
    const GridSpec g = GridSpec::planar(2, 2);
    const FieldData d{g, {{1, 2, 3, 4}}};
    std::ostringstream out;
    write_field_csv(out, d, {"kx"});
    const std::string text = out.str();
    EXPECT_EQ(text.rfind("i,j,k,x,y,z,kx\n", 0), 0u);
    int lines = 0;
    for (char c : text)
        lines += c == '\n';
    EXPECT_EQ(lines, 5);
}

TEST(Config, PresetsValidateAndDescribeTheirGrids)
{
    for (const auto& name : preset_names()) {
        const auto c = preset_config(name);
        EXPECT_NO_THROW(c.validate()) << name;
        EXPECT_EQ(c.preset, name);
    }
    const auto base = preset_config("2d-base");
    EXPECT_EQ(base.grid(), GridSpec::planar(100, 100));
    EXPECT_EQ(base.network_spec().input_size, 10);
    const auto aniso = preset_config("3d-aniso");
    EXPECT_EQ(aniso.dim(), 3);
    EXPECT_EQ(aniso.network_spec().in_channels, 3);
    EXPECT_EQ(preset_config("3d-iso").network_spec().in_channels, 1);
    EXPECT_THROW(preset_config("nope"), ConfigError);
}

TEST(Config, ParseAppliesPresetThenKeys)
{
    std::istringstream in("# comment\nratio = 5   # inline\npreset = 2d-ratio20\nseed = 17\ndrive = 0, 2, 0\n");
    const auto c = parse_config(in);
    EXPECT_EQ(c.preset, "2d-ratio20");
    EXPECT_EQ(c.ratio, 5);
    EXPECT_EQ(c.seed, 17u);
    EXPECT_EQ(c.drive[1], 2.0);
}

TEST(Config, TextFormRoundTrips)
{
    auto c = preset_config("3d-aniso");
    c.seed = 99;
    c.learning_rate = 3.3e-4;
    c.bench_counts = {2, 5};
    c.out = "some/dir";
    std::istringstream in(to_text(c));
    const auto back = parse_config(in);
    EXPECT_EQ(to_text(back), to_text(c));
    EXPECT_EQ(back.learning_rate, c.learning_rate);
    EXPECT_EQ(back.bench_counts, c.bench_counts);
}

TEST(Config, RejectsBadValues)
{
    RunConfig c;
    EXPECT_THROW(set_option(c, "no_such_key", "1"), ConfigError);
    EXPECT_THROW(set_option(c, "ratio", "ten"), ConfigError);
    c.ratio = 7;
    try {
        c.validate();
        FAIL() << "expected ConfigError";
    } catch (const ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find("x"), std::string::npos);
    }
    c = RunConfig{};
    c.drive = {0.0, 0.0, 0.0};
    EXPECT_THROW(c.validate(), ConfigError);
    c = preset_config("3d-iso");
    c.network = "table1";
    EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Config, SeedStreamsAreDistinct)
{
    EXPECT_NE(stream_seed(1, SeedStream::training_fields, 0), stream_seed(1, SeedStream::evaluation_fields, 0));
    EXPECT_NE(stream_seed(1, SeedStream::training_fields, 0), stream_seed(1, SeedStream::training_fields, 1));
    EXPECT_EQ(stream_seed(5, SeedStream::network, 2), stream_seed(5, SeedStream::network, 2));
}

TEST(Workflow, FieldsAreReproducibleAndPoolsAreCapped)
{
    RunConfig c;
    c.cells = {20, 20, 1};
    c.ratio = 5;
    c.network = "table2";
    c.corr_length = {5.0, 5.0, 5.0};
    c.residual_fields = 2;
    c.residual_patches = 20;
    const auto basis = decompose(c.covariance(), c.grid(), c.energy);
    const auto a = generate_field(basis, c, SeedStream::evaluation_fields, 3);
    const auto fields = generate_fields(basis, c, SeedStream::evaluation_fields, 4, 2);
    for (std::size_t i = 0; i < a.grid().cells(); ++i)
        ASSERT_EQ(a.k(0, i), fields[3].k(0, i));
    const auto pool = residual_pool(basis, c, 2);
    EXPECT_EQ(pool.size(), 20u);
    const auto labeled = labeled_pool(pool, 3, PeriodicDrive::unit(0), 2);
    ASSERT_EQ(labeled.patches.size(), 3u);
    const auto direct = solve_patch(pool[2], PeriodicDrive::unit(0));
    for (std::size_t i = 0; i < direct.heads.size(); ++i)
        EXPECT_EQ(labeled.heads[2][i], direct.heads[i]);
}
