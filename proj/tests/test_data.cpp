#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "shapednet/data.hpp"

using namespace shapednet;

namespace {

std::string temp_dir(const std::string& stem) {
    std::string d = "/tmp/shapednet_data_" + stem;
    std::filesystem::remove_all(d);
    return d;
}

SampleRecord dummy_record(double bmi_value, int i) {
    SampleRecord r;
    r.image_path = "img_" + std::to_string(i) + ".png";
    r.x = r.y = 0.5;
    r.w = r.h = 0.5;
    r.bfp = 20.0;
    r.sex = i % 2 ? Sex::Female : Sex::Male;
    r.height = 1.7;
    r.weight = bmi_value * 1.7 * 1.7;
    return r;
}

std::vector<SampleRecord> dummy_records(int n) {
    std::vector<SampleRecord> out;
    out.reserve(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
        const double bmi = 15.0 + 33.0 * i / std::max(1, n - 1);
        out.push_back(dummy_record(bmi, i));
    }
    return out;
}

std::array<int, 3> split_counts(const std::vector<SampleRecord>& rs) {
    std::array<int, 3> c{};
    for (const SampleRecord& r : rs) {
        REQUIRE(r.split != Split::Unassigned);
        if (r.split == Split::Train) ++c[0];
        if (r.split == Split::Val) ++c[1];
        if (r.split == Split::Test) ++c[2];
    }
    return c;
}

double ink(const GrayImage& img) {
    double sum = 0.0;
    for (uint8_t p : img.pixels) sum += 255 - p;
    return sum;
}

}  // namespace

TEST_SUITE("data") {
    TEST_CASE("fatness maps linearly onto the observed body-fat range") {
        CHECK(synthetic_bfp(0.0) == 9.30);
        CHECK(synthetic_bfp(1.0) == 9.30 + 48.30);
        CHECK(synthetic_bfp(1.0) == doctest::Approx(57.60).epsilon(1e-12));
        CHECK(synthetic_bfp(0.5) == doctest::Approx(33.45).epsilon(1e-12));
        CHECK_THROWS_AS(synthetic_bfp(-0.1), ParameterError);
        CHECK_THROWS_AS(synthetic_bfp(1.1), ParameterError);
    }

    TEST_CASE("bmi arithmetic and the six strata") {
        CHECK(compute_bmi(70.0, 1.75) == 70.0 / (1.75 * 1.75));
        CHECK_THROWS_AS(compute_bmi(70.0, 0.0), DataError);
        CHECK(bmi_category(17.0) == 1);
        CHECK(bmi_category(18.5) == 2);  // boundary belongs upward
        CHECK(bmi_category(24.9) == 2);
        CHECK(bmi_category(25.0) == 3);
        CHECK(bmi_category(29.9) == 3);
        CHECK(bmi_category(30.0) == 4);
        CHECK(bmi_category(34.9) == 4);
        CHECK(bmi_category(35.0) == 5);
        CHECK(bmi_category(39.9) == 5);
        CHECK(bmi_category(40.0) == 6);
        CHECK(bmi_category(42.0) == 6);
        CHECK_THROWS_AS(bmi_category(0.0), DataError);
        CHECK_THROWS_AS(bmi_category(-1.0), DataError);
    }

    TEST_CASE("rendering is deterministic in the rng and sensitive to it") {
        Rng a(7), b(7), c(8);
        GrayImage ia = render_silhouette(48, 0.4, Sex::Male, a);
        GrayImage ib = render_silhouette(48, 0.4, Sex::Male, b);
        GrayImage ic = render_silhouette(48, 0.4, Sex::Male, c);
        CHECK(ia.pixels == ib.pixels);
        CHECK(ia.pixels != ic.pixels);
    }

    TEST_CASE("silhouette coverage grows strictly with fatness at fixed pose") {
        for (Sex sex : {Sex::Male, Sex::Female}) {
            double prev = -1.0;
            for (double s : {0.0, 0.25, 0.5, 0.75, 1.0}) {
                Rng rng(11);  // same seed = same pose-jitter draws
                const double cover = ink(render_silhouette(64, s, sex, rng));
                CHECK(cover > prev);
                prev = cover;
            }
        }
    }

    TEST_CASE("the sexes produce distinct silhouettes") {
        Rng a(3), b(3);
        GrayImage m = render_silhouette(48, 0.5, Sex::Male, a);
        GrayImage f = render_silhouette(48, 0.5, Sex::Female, b);
        CHECK(m.pixels != f.pixels);
    }

    TEST_CASE("render rejects bad arguments") {
        Rng rng(1);
        CHECK_THROWS_AS(render_silhouette(8, 0.5, Sex::Male, rng), ParameterError);
        CHECK_THROWS_AS(render_silhouette(48, 1.5, Sex::Male, rng), ParameterError);
    }

    TEST_CASE("generated boxes match a pixel scan of the stored images") {
        const std::string dir = temp_dir("bbox");
        SyntheticSpec spec;
        spec.count = 30;
        spec.image_size = 48;
        spec.seed = 97;
        std::vector<SampleRecord> rs = generate_synthetic_dataset(spec, dir);
        REQUIRE(rs.size() == 30);
        for (const SampleRecord& r : rs) {
            GrayImage img = read_png_gray(dir + "/" + r.image_path);
            int xmin = 48, xmax = -1, ymin = 48, ymax = -1;
            for (int y = 0; y < 48; ++y)
                for (int x = 0; x < 48; ++x)
                    if (img.at(x, y) < 255) {
                        xmin = std::min(xmin, x);
                        xmax = std::max(xmax, x);
                        ymin = std::min(ymin, y);
                        ymax = std::max(ymax, y);
                    }
            CHECK(r.x == (xmin + xmax + 1) * 0.5 / 48);
            CHECK(r.y == (ymin + ymax + 1) * 0.5 / 48);
            CHECK(r.w == static_cast<double>(xmax - xmin + 1) / 48);
            CHECK(r.h == static_cast<double>(ymax - ymin + 1) / 48);
            CHECK(r.bfp >= 9.30);
            CHECK(r.bfp <= 57.60);
        }
        std::filesystem::remove_all(dir);
    }

    TEST_CASE("generation is deterministic per seed, across output directories") {
        SyntheticSpec spec;
        spec.count = 12;
        spec.image_size = 24;
        spec.seed = 5;
        const std::string d1 = temp_dir("det1"), d2 = temp_dir("det2");
        generate_synthetic_dataset(spec, d1);
        generate_synthetic_dataset(spec, d2);
        std::ifstream m1(d1 + "/manifest.txt"), m2(d2 + "/manifest.txt");
        std::string s1((std::istreambuf_iterator<char>(m1)), std::istreambuf_iterator<char>());
        std::string s2((std::istreambuf_iterator<char>(m2)), std::istreambuf_iterator<char>());
        CHECK(s1 == s2);
        CHECK(!s1.empty());
        for (int i = 0; i < 12; ++i) {
            char name[32];
            std::snprintf(name, sizeof name, "img_%05d.png", i);
            CHECK(read_png_gray(d1 + "/" + std::string(name)).pixels ==
                  read_png_gray(d2 + "/" + std::string(name)).pixels);
        }
        std::filesystem::remove_all(d1);
        std::filesystem::remove_all(d2);
    }

    TEST_CASE("a full-range batch hits every bmi stratum") {
        const std::string dir = temp_dir("strata");
        SyntheticSpec spec;
        spec.count = 120;
        spec.image_size = 24;
        spec.seed = 41;
        std::vector<SampleRecord> rs = generate_synthetic_dataset(spec, dir);
        std::array<int, 7> seen{};
        for (const SampleRecord& r : rs) ++seen[static_cast<size_t>(bmi_category(r.bmi()))];
        for (int cat = 1; cat <= 6; ++cat) CHECK(seen[static_cast<size_t>(cat)] > 0);
        std::filesystem::remove_all(dir);
    }

    TEST_CASE("1273 records split 1019/127/127 with every stratum within one") {
        std::vector<SampleRecord> rs = dummy_records(1273);
        stratified_split(rs, 0.8, 0.1, 0.1, 20230501);
        std::array<int, 3> c = split_counts(rs);
        CHECK(c[0] == 1019);
        CHECK(c[1] == 127);
        CHECK(c[2] == 127);
        std::array<std::array<double, 3>, 7> per_cat{};
        std::array<int, 7> cat_n{};
        for (const SampleRecord& r : rs) {
            const size_t cat = static_cast<size_t>(bmi_category(r.bmi()));
            ++cat_n[cat];
            if (r.split == Split::Train) ++per_cat[cat][0];
            if (r.split == Split::Val) ++per_cat[cat][1];
            if (r.split == Split::Test) ++per_cat[cat][2];
        }
        const double ratios[3] = {0.8, 0.1, 0.1};
        for (size_t cat = 1; cat <= 6; ++cat) {
            if (!cat_n[cat]) continue;
            for (int k = 0; k < 3; ++k) {
                const double exact = cat_n[cat] * ratios[k];
                CHECK(std::abs(per_cat[cat][static_cast<size_t>(k)] - exact) <= 1.0 + 1e-9);
            }
        }
    }

    TEST_CASE("splits follow largest-remainder sizes across many counts") {
        for (int n : {10, 28, 37, 100, 123, 280}) {
            std::vector<SampleRecord> rs = dummy_records(n);
            stratified_split(rs, 0.8, 0.1, 0.1, 9);
            std::array<int, 3> c = split_counts(rs);
            CHECK(c[0] + c[1] + c[2] == n);
            CHECK(std::abs(c[0] - 0.8 * n) < 1.0);
            CHECK(std::abs(c[1] - 0.1 * n) <= 1.0);
            CHECK(std::abs(c[2] - 0.1 * n) <= 1.0);
        }
        std::vector<SampleRecord> ten = dummy_records(10);
        stratified_split(ten, 0.8, 0.1, 0.1, 1);
        std::array<int, 3> c = split_counts(ten);
        CHECK(c[0] == 8);
        CHECK(c[1] == 1);
        CHECK(c[2] == 1);
        std::vector<SampleRecord> r280 = dummy_records(280);
        stratified_split(r280, 0.8, 0.1, 0.1, 2);
        std::array<int, 3> c280 = split_counts(r280);
        CHECK(c280[0] == 224);
        CHECK(c280[1] == 28);
        CHECK(c280[2] == 28);
    }

    TEST_CASE("splitting is deterministic per seed") {
        std::vector<SampleRecord> a = dummy_records(200), b = dummy_records(200);
        stratified_split(a, 0.8, 0.1, 0.1, 77);
        stratified_split(b, 0.8, 0.1, 0.1, 77);
        for (size_t i = 0; i < a.size(); ++i) CHECK(a[i].split == b[i].split);
        std::vector<SampleRecord> c = dummy_records(200);
        stratified_split(c, 0.8, 0.1, 0.1, 78);
        bool any_diff = false;
        for (size_t i = 0; i < a.size(); ++i)
            if (a[i].split != c[i].split) any_diff = true;
        CHECK(any_diff);
    }

    TEST_CASE("split argument validation") {
        std::vector<SampleRecord> rs = dummy_records(20);
        CHECK_THROWS_AS(stratified_split(rs, 0.8, 0.1, 0.2, 1), ConfigError);
        CHECK_THROWS_AS(stratified_split(rs, 1.1, -0.2, 0.1, 1), ConfigError);
        std::vector<SampleRecord> none;
        CHECK_THROWS_AS(stratified_split(none, 0.8, 0.1, 0.1, 1), DataError);
    }

    TEST_CASE("manifest round trip preserves every field exactly") {
        std::vector<SampleRecord> rs = dummy_records(5);
        rs[0].split = Split::Train;
        rs[1].split = Split::Val;
        rs[2].split = Split::Test;
        rs[3].bfp = 43.21;
        rs[4].x = 1.0 / 3.0;  // needs all shortest-round-trip digits
        rs[4].w = 0.125;
        const std::string path = "/tmp/shapednet_manifest_rt.txt";
        save_manifest(path, rs);
        std::vector<SampleRecord> back = load_manifest(path);
        REQUIRE(back.size() == rs.size());
        for (size_t i = 0; i < rs.size(); ++i) {
            CHECK(back[i].image_path == rs[i].image_path);
            CHECK(back[i].x == rs[i].x);
            CHECK(back[i].y == rs[i].y);
            CHECK(back[i].w == rs[i].w);
            CHECK(back[i].h == rs[i].h);
            CHECK(back[i].bfp == rs[i].bfp);
            CHECK(back[i].sex == rs[i].sex);
            CHECK(back[i].height == rs[i].height);
            CHECK(back[i].weight == rs[i].weight);
            CHECK(back[i].split == rs[i].split);
        }
        std::remove(path.c_str());
    }

    TEST_CASE("manifest errors carry the line number") {
        const std::string path = "/tmp/shapednet_manifest_bad.txt";
        {
            std::ofstream os(path, std::ios::trunc);
            os << "# header\n";
            os << "a.png\t0.5\t0.5\t0.5\t0.5\t20\tmale\t1.7\t60\ttrain\n";
            os << "b.png\t0.5\t0.5\t0.5\n";
        }
        try {
            load_manifest(path);
            FAIL("expected ParseError");
        } catch (const ParseError& e) {
            CHECK(std::string(e.what()).find("line 3") != std::string::npos);
        }
        {
            std::ofstream os(path, std::ios::trunc);
            os << "a.png\t0.5\t0.5\t0.5\t0.5\t20\tmale\t1.7\t60\ttrain\n";
            os << "b.png\t0.5\t0.5\t0.5\t0.5\tabc\tmale\t1.7\t60\ttrain\n";
        }
        try {
            load_manifest(path);
            FAIL("expected ParseError");
        } catch (const ParseError& e) {
            CHECK(std::string(e.what()).find("line 2") != std::string::npos);
        }
        {
            // Well-formed but out of the observed body-fat range.
            std::ofstream os(path, std::ios::trunc);
            os << "a.png\t0.5\t0.5\t0.5\t0.5\t5.0\tmale\t1.7\t60\ttrain\n";
        }
        CHECK_THROWS_AS(load_manifest(path), DataError);
        CHECK_THROWS_AS(load_manifest("/tmp/shapednet_no_manifest.txt"), IoError);
        std::remove(path.c_str());
    }

    TEST_CASE("record validation rejects out-of-image boxes") {
        SampleRecord r = dummy_record(22.0, 0);
        CHECK_NOTHROW(r.validate());
        r.x = 0.9;
        r.w = 0.3;  // right edge at 1.05
        CHECK_THROWS_AS(r.validate(), DataError);
        SampleRecord z = dummy_record(22.0, 1);
        z.w = 0.0;
        CHECK_THROWS_AS(z.validate(), DataError);
        SampleRecord f = dummy_record(22.0, 2);
        f.bfp = 60.0;
        CHECK_THROWS_AS(f.validate(), DataError);
    }

    TEST_CASE("image_to_channels replicates normalized gray into three planes") {
        GrayImage img(2, 2);
        img.at(0, 0) = 0;
        img.at(1, 0) = 255;
        img.at(0, 1) = 51;
        img.at(1, 1) = 102;
        std::vector<double> ch = image_to_channels(img);
        REQUIRE(ch.size() == 12);
        CHECK(ch[0] == 0.0);
        CHECK(ch[1] == 1.0);
        CHECK(ch[2] == 0.2);
        CHECK(ch[3] == 0.4);
        for (size_t i = 0; i < 4; ++i) {
            CHECK(ch[4 + i] == ch[i]);
            CHECK(ch[8 + i] == ch[i]);
        }
    }

    TEST_CASE("sex and split tokens round trip") {
        CHECK(parse_sex(sex_str(Sex::Male)) == Sex::Male);
        CHECK(parse_sex(sex_str(Sex::Female)) == Sex::Female);
        for (Split s : {Split::Train, Split::Val, Split::Test, Split::Unassigned})
            CHECK(parse_split(split_str(s)) == s);
        CHECK_THROWS_AS(parse_sex("other"), ParseError);
        CHECK_THROWS_AS(parse_split("holdout"), ParseError);
    }
}
