#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "fmm/errors.hpp"
#include "fmm/model.hpp"

using namespace fmm;
namespace fs = std::filesystem;

namespace {

fs::path temp_file(const std::string& name) {
    const auto dir = fs::temp_directory_path() / "fmm_tests";
    fs::create_directories(dir);
    return dir / name;
}

}  // namespace

TEST_CASE("parameter and gradient views stay aligned") {
    ArchConfig arch;
    arch.encoder_sizes = {16, 8};
    auto model = make_fmm_autoencoder(32, arch, 1);
    AutoencoderGrads grads;
    grads.encoder = zero_grads(model.encoder);
    grads.decoder = HeadGrads{zero_grads(std::get<FMMHead>(model.decoder).net)};
    const auto params = collect_params(model);
    const auto views = collect_grads(grads, model);
    REQUIRE(params.size() == views.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
        CHECK(params[i].name == views[i].name);
        CHECK(params[i].size == views[i].size);
    }
}

TEST_CASE("checkpoint round trip: FMM variant") {
    ArchConfig arch;
    arch.encoder_sizes = {24, 12};
    arch.omega_max = 0.37;
    auto model = make_fmm_autoencoder(48, arch, 42);
    const auto path = temp_file("fmm.ckpt");
    save_checkpoint(model, path);
    auto loaded = load_checkpoint(path);

    CHECK(has_fmm_head(loaded));
    CHECK(loaded.l_pad == 48);
    CHECK(loaded.init_seed == 42);
    CHECK(std::get<FMMHead>(loaded.decoder).omega_max == doctest::Approx(0.37));

    auto a = collect_params(model);
    auto b = collect_params(loaded);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        REQUIRE(a[i].size == b[i].size);
        for (std::ptrdiff_t k = 0; k < a[i].size; ++k) {
            CHECK(a[i].data[k] == b[i].data[k]);  // bit-exact
        }
    }
}

TEST_CASE("checkpoint round trip: baseline keeps decoder MLP") {
    ArchConfig arch;
    arch.encoder_sizes = {20, 10};
    auto model = make_dense_autoencoder(40, arch, 7);
    const auto path = temp_file("dense.ckpt");
    save_checkpoint(model, path);
    const auto loaded = load_checkpoint(path);
    CHECK(!has_fmm_head(loaded));
    CHECK(std::get<MLP>(loaded.decoder).layers.size() == 2);
    CHECK(std::get<MLP>(loaded.decoder).layers.back().weights.rows() == 40);
}

TEST_CASE("checkpoint: wrong layout version is rejected") {
    ArchConfig arch;
    arch.encoder_sizes = {8};
    auto model = make_dense_autoencoder(16, arch, 3);
    const auto path = temp_file("layout.ckpt");
    save_checkpoint(model, path);

    // Bump the version byte inside the JSON header.
    std::ifstream in(path, std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    in.close();
    const auto pos = bytes.find("\"layout_version\":1");
    REQUIRE(pos != std::string::npos);
    bytes[pos + std::string("\"layout_version\":").size()] = '9';
    std::ofstream out(path, std::ios::binary);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    out.close();

    CHECK_THROWS_AS(load_checkpoint(path), StructuralError);
}

TEST_CASE("checkpoint: truncated file is rejected") {
    ArchConfig arch;
    arch.encoder_sizes = {8};
    auto model = make_dense_autoencoder(16, arch, 3);
    const auto path = temp_file("trunc.ckpt");
    save_checkpoint(model, path);
    const auto size = fs::file_size(path);
    fs::resize_file(path, size - 64);
    CHECK_THROWS_AS(load_checkpoint(path), StructuralError);
}
