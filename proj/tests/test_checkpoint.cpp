#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "shapednet/checkpoint.hpp"

using namespace shapednet;

namespace {

NetworkConfig tiny_config() {
    NetworkConfig cfg;
    cfg.input_size = 32;
    cfg.channel_mult = 0.125;
    return cfg;
}

std::string temp_path(const char* name) {
    return (std::filesystem::temp_directory_path() / name).string();
}

std::vector<char> slurp(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    REQUIRE(is);
    return std::vector<char>((std::istreambuf_iterator<char>(is)),
                             std::istreambuf_iterator<char>());
}

}  // namespace

TEST_SUITE("checkpoint") {
    TEST_CASE("save/load round trip restores every tensor exactly (f32 precision)") {
        ShapedNetModel a = build_network(tiny_config(), 5);
        // Dirty the running stats so they are part of the round trip.
        a.convs[0].stats.running_mean[0] = 0.25;
        a.convs[0].stats.running_var[0] = 2.5;
        const std::string path = temp_path("ckpt_roundtrip.snf1");
        save_checkpoint(path, a);

        ShapedNetModel b = build_network(tiny_config(), 999);
        load_checkpoint(path, b);
        auto sa = model_state(a), sb = model_state(b);
        REQUIRE(sa.size() == sb.size());
        for (size_t i = 0; i < sa.size(); ++i) {
            CHECK(sa[i].name == sb[i].name);
            REQUIRE(sa[i].data->size() == sb[i].data->size());
            for (size_t j = 0; j < sa[i].data->size(); ++j)
                CHECK((*sb[i].data)[j] ==
                      static_cast<double>(static_cast<float>((*sa[i].data)[j])));
        }
        CHECK(b.convs[0].stats.running_mean[0] == doctest::Approx(0.25).epsilon(1e-7));
        std::filesystem::remove(path);
    }

    TEST_CASE("saving twice produces byte-identical files") {
        ShapedNetModel a = build_network(tiny_config(), 5);
        const std::string p1 = temp_path("ckpt_a.snf1"), p2 = temp_path("ckpt_b.snf1");
        save_checkpoint(p1, a);
        save_checkpoint(p2, a);
        CHECK(slurp(p1) == slurp(p2));
        std::filesystem::remove(p1);
        std::filesystem::remove(p2);
    }

    TEST_CASE("file layout starts with magic and version") {
        ShapedNetModel a = build_network(tiny_config(), 5);
        const std::string path = temp_path("ckpt_magic.snf1");
        save_checkpoint(path, a);
        std::vector<char> bytes = slurp(path);
        REQUIRE(bytes.size() > 12);
        CHECK(std::memcmp(bytes.data(), "SNF1", 4) == 0);
        CHECK(bytes[4] == 1);  // version 1, little-endian
        CHECK(bytes[5] == 0);
        std::filesystem::remove(path);
    }

    TEST_CASE("loading into a mismatched architecture lists every problem") {
        ShapedNetModel a = build_network(tiny_config(), 5);
        const std::string path = temp_path("ckpt_mismatch.snf1");
        save_checkpoint(path, a);
        NetworkConfig other = tiny_config();
        other.channel_mult = 0.25;  // every conv width changes
        ShapedNetModel b = build_network(other, 5);
        try {
            load_checkpoint(path, b);
            FAIL("expected CheckpointError");
        } catch (const CheckpointError& e) {
            const std::string msg = e.what();
            CHECK(msg.find("shape mismatch") != std::string::npos);
            CHECK(msg.find("conv01/kernel") != std::string::npos);
            CHECK(msg.find("conv75/kernel") != std::string::npos);
        }
        std::filesystem::remove(path);
    }

    TEST_CASE("a regression-only checkpoint cannot load into a detector and vice versa") {
        NetworkConfig no_reg = tiny_config();
        no_reg.regression_branch = false;
        ShapedNetModel a = build_network(no_reg, 5);
        const std::string path = temp_path("ckpt_noreg.snf1");
        save_checkpoint(path, a);
        ShapedNetModel b = build_network(tiny_config(), 5);
        try {
            load_checkpoint(path, b);
            FAIL("expected CheckpointError");
        } catch (const CheckpointError& e) {
            CHECK(std::string(e.what()).find("missing tensor: bf/weight") != std::string::npos);
        }
        // Reverse direction: the file has extra tensors.
        ShapedNetModel c = build_network(tiny_config(), 5);
        const std::string path2 = temp_path("ckpt_reg.snf1");
        save_checkpoint(path2, c);
        ShapedNetModel d = build_network(no_reg, 5);
        try {
            load_checkpoint(path2, d);
            FAIL("expected CheckpointError");
        } catch (const CheckpointError& e) {
            CHECK(std::string(e.what()).find("unexpected tensor: bf/weight") != std::string::npos);
        }
        std::filesystem::remove(path);
        std::filesystem::remove(path2);
    }

    TEST_CASE("backbone-only loading copies conv01..conv52 and nothing else") {
        ShapedNetModel donor = build_network(tiny_config(), 5);
        const std::string path = temp_path("ckpt_backbone.snf1");
        save_checkpoint(path, donor);
        ShapedNetModel target = build_network(tiny_config(), 333);
        const std::vector<double> head_kernel_before =
            target.convs[static_cast<size_t>(target.topo.head_out[0])].kernel.values();
        const std::vector<double> bf_before = target.bf_weight.values();
        load_pretrained_backbone(target, path);
        // Backbone conv now matches the donor (through f32).
        const auto& donor_k = donor.convs[0].kernel.values();
        const auto& target_k = target.convs[0].kernel.values();
        for (size_t i = 0; i < donor_k.size(); ++i)
            CHECK(target_k[i] == static_cast<double>(static_cast<float>(donor_k[i])));
        // Head and regression parameters are untouched.
        CHECK(target.convs[static_cast<size_t>(target.topo.head_out[0])].kernel.values() ==
              head_kernel_before);
        CHECK(target.bf_weight.values() == bf_before);
        std::filesystem::remove(path);
    }

    TEST_CASE("backbone loading reports missing and mis-shaped tensors together") {
        ShapedNetModel donor = build_network(tiny_config(), 5);
        const std::string path = temp_path("ckpt_badbb.snf1");
        save_checkpoint(path, donor);
        NetworkConfig wider = tiny_config();
        wider.channel_mult = 0.25;
        ShapedNetModel target = build_network(wider, 5);
        try {
            load_pretrained_backbone(target, path);
            FAIL("expected CheckpointError");
        } catch (const CheckpointError& e) {
            const std::string msg = e.what();
            CHECK(msg.find("conv01/kernel") != std::string::npos);
            CHECK(msg.find("conv52") != std::string::npos);
            // Head convs are not the backbone's problem.
            CHECK(msg.find("conv53") == std::string::npos);
        }
        std::filesystem::remove(path);
    }

    TEST_CASE("corrupt files are rejected") {
        const std::string path = temp_path("ckpt_corrupt.snf1");
        {
            std::ofstream os(path, std::ios::binary);
            os << "not a checkpoint at all";
        }
        ShapedNetModel m = build_network(tiny_config(), 5);
        CHECK_THROWS_AS(load_checkpoint(path, m), CheckpointError);
        CHECK_THROWS_AS(load_checkpoint("/nonexistent/nope.snf1", m), IoError);
        // Truncated real checkpoint.
        save_checkpoint(path, m);
        std::vector<char> bytes = slurp(path);
        {
            std::ofstream os(path, std::ios::binary | std::ios::trunc);
            os.write(bytes.data(), static_cast<std::streamsize>(bytes.size() / 2));
        }
        CHECK_THROWS_AS(load_checkpoint(path, m), CheckpointError);
        std::filesystem::remove(path);
    }
}
