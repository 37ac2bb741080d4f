#include "shapednet/data.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>

#include "shapednet/format.hpp"

namespace shapednet {

const char* sex_str(Sex s) { return s == Sex::Male ? "male" : "female"; }

const char* split_str(Split s) {
    switch (s) {
        case Split::Train: return "train";
        case Split::Val: return "val";
        case Split::Test: return "test";
        default: return "unassigned";
    }
}

Sex parse_sex(const std::string& s) {
    if (s == "male") return Sex::Male;
    if (s == "female") return Sex::Female;
    throw ParseError("unknown sex: '" + s + "'");
}

Split parse_split(const std::string& s) {
    if (s == "train") return Split::Train;
    if (s == "val") return Split::Val;
    if (s == "test") return Split::Test;
    if (s == "unassigned") return Split::Unassigned;
    throw ParseError("unknown split: '" + s + "'");
}

double SampleRecord::bmi() const { return compute_bmi(weight, height); }

void SampleRecord::validate() const {
    if (image_path.empty()) throw DataError("empty image path");
    if (!(height > 0.0) || !std::isfinite(height)) throw DataError("height must be positive");
    if (!(weight > 0.0) || !std::isfinite(weight)) throw DataError("weight must be positive");
    if (bfp < 9.30 || bfp > 57.60)
        throw DataError("body-fat percentage " + format_double(bfp) +
                        " outside the observed range 9.30..57.60");
    if (x < 0.0 || x > 1.0 || y < 0.0 || y > 1.0)
        throw DataError("bbox center outside [0,1]");
    if (!(w > 0.0) || !(h > 0.0) || w > 1.0 || h > 1.0)
        throw DataError("bbox extents must be in (0,1]");
    const double tol = 1e-9;
    if (x - w / 2 < -tol || x + w / 2 > 1.0 + tol || y - h / 2 < -tol || y + h / 2 > 1.0 + tol)
        throw DataError("bbox extends beyond the image");
}

void SyntheticSpec::validate() const {
    if (count < 1) throw ConfigError("count must be >= 1");
    if (image_size < 16) throw ConfigError("image_size must be >= 16");
    if (fat_lo < 0.0 || fat_hi > 1.0 || fat_lo > fat_hi)
        throw ConfigError("fat range must satisfy 0 <= lo <= hi <= 1");
    if (sex_ratio < 0.0 || sex_ratio > 1.0) throw ConfigError("sex_ratio must be in [0,1]");
}

double synthetic_bfp(double s) {
    if (s < 0.0 || s > 1.0) throw ParameterError("fatness must be in [0,1]");
    return 9.30 + 48.30 * s;
}

double compute_bmi(double weight, double height) {
    if (!(height > 0.0)) throw DataError("height must be positive");
    return weight / (height * height);
}

int bmi_category(double bmi) {
    if (!(bmi > 0.0) || !std::isfinite(bmi)) throw DataError("bmi must be positive");
    if (bmi < 18.5) return 1;
    if (bmi < 25.0) return 2;
    if (bmi < 30.0) return 3;
    if (bmi < 35.0) return 4;
    if (bmi < 40.0) return 5;
    return 6;
}

GrayImage render_silhouette(int image_size, double s, Sex sex, Rng& rng) {
    if (image_size < 16) throw ParameterError("image_size must be >= 16");
    if (s < 0.0 || s > 1.0) throw ParameterError("fatness must be in [0,1]");
    // Pose jitter: exactly four draws, independent of s and sex.
    const double h_frac = 0.78 + 0.10 * rng.uniform();
    const double cx = 0.5 + 0.08 * (rng.uniform() - 0.5);
    const double top = (1.0 - h_frac) / 2.0 + 0.02 * (rng.uniform() - 0.5);
    const double leg_gap = (0.010 + 0.010 * rng.uniform()) * h_frac;

    const double r_head = 0.075 * h_frac;
    const double head_cy = top + r_head;
    const double neck_hw = 0.030 * h_frac;
    const double torso_top = top + 2.0 * r_head;
    const double torso_h = 0.40 * h_frac;
    const double torso_bot = torso_top + torso_h;
    const double bw = (0.085 + 0.115 * s) * h_frac;  // base torso half-width
    const bool female = sex == Sex::Female;
    const double leg_hw = (0.030 + 0.014 * s) * h_frac;
    const double bottom = top + h_frac;
    const double arm_hw = 0.021 * h_frac;
    const double arm_top = torso_top + 0.02 * h_frac;
    const double arm_bot = torso_top + 0.34 * h_frac;

    // Male silhouettes taper from shoulders to hips, female ones flare; the
    // waist pinch fades as fatness grows. Strictly increasing in s at every v.
    auto torso_hw = [&](double v) {
        double prof = female ? 0.84 + 0.26 * v : 1.06 - 0.22 * v;
        prof *= 1.0 - 0.10 * std::sin(M_PI * v) * (1.0 - s);
        return bw * prof;
    };

    auto inside = [&](double x, double y) {
        const double dxh = x - cx, dyh = y - head_cy;
        if (dxh * dxh + dyh * dyh <= r_head * r_head) return true;
        if (y >= head_cy && y <= torso_top && std::abs(x - cx) <= neck_hw) return true;
        if (y >= torso_top && y <= torso_bot) {
            const double v = (y - torso_top) / torso_h;
            if (std::abs(x - cx) <= torso_hw(v)) return true;
        }
        if (y >= arm_top && y <= arm_bot) {
            const double v = (y - torso_top) / torso_h;
            const double arm_center = torso_hw(v) + arm_hw;
            if (std::abs(std::abs(x - cx) - arm_center) <= arm_hw) return true;
        }
        if (y >= torso_bot && y <= bottom) {
            const double leg_center = leg_gap / 2.0 + leg_hw;
            if (std::abs(std::abs(x - cx) - leg_center) <= leg_hw) return true;
        }
        return false;
    };

    GrayImage img(image_size, image_size, 255);
    const int ss = 4;  // 4x4 supersampling for anti-aliased edges
    for (int py = 0; py < image_size; ++py) {
        for (int px = 0; px < image_size; ++px) {
            int cover = 0;
            for (int sy = 0; sy < ss; ++sy)
                for (int sx = 0; sx < ss; ++sx)
                    if (inside((px + (sx + 0.5) / ss) / image_size,
                               (py + (sy + 0.5) / ss) / image_size))
                        ++cover;
            img.at(px, py) = static_cast<uint8_t>(
                std::lround(255.0 * (1.0 - static_cast<double>(cover) / (ss * ss))));
        }
    }
    return img;
}

std::vector<SampleRecord> generate_synthetic_dataset(const SyntheticSpec& spec,
                                                     const std::string& out_dir) {
    spec.validate();
    std::filesystem::create_directories(out_dir);
    std::vector<SampleRecord> records;
    records.reserve(static_cast<size_t>(spec.count));
    for (int i = 0; i < spec.count; ++i) {
        Rng rng(Rng::derive(spec.seed, static_cast<uint64_t>(i)));
        const double s = rng.uniform(spec.fat_lo, spec.fat_hi);
        const Sex sex = rng.uniform() < spec.sex_ratio ? Sex::Female : Sex::Male;
        const double height = rng.uniform(1.50, 1.95);
        const double bmi = 16.0 + 30.0 * s + rng.uniform(-2.0, 2.0);
        GrayImage img = render_silhouette(spec.image_size, s, sex, rng);

        int xmin = spec.image_size, xmax = -1, ymin = spec.image_size, ymax = -1;
        for (int y = 0; y < spec.image_size; ++y)
            for (int x = 0; x < spec.image_size; ++x)
                if (img.at(x, y) < 255) {
                    xmin = std::min(xmin, x);
                    xmax = std::max(xmax, x);
                    ymin = std::min(ymin, y);
                    ymax = std::max(ymax, y);
                }
        if (xmax < 0) throw DataError("rendered silhouette is empty");

        char name[32];
        std::snprintf(name, sizeof name, "img_%05d.png", i);
        write_png_gray(out_dir + "/" + name, img);

        SampleRecord r;
        r.image_path = name;
        r.x = (xmin + xmax + 1) * 0.5 / spec.image_size;
        r.y = (ymin + ymax + 1) * 0.5 / spec.image_size;
        r.w = static_cast<double>(xmax - xmin + 1) / spec.image_size;
        r.h = static_cast<double>(ymax - ymin + 1) / spec.image_size;
        r.bfp = synthetic_bfp(s);
        r.sex = sex;
        r.height = height;
        r.weight = bmi * height * height;
        r.validate();
        records.push_back(std::move(r));
    }
    save_manifest(out_dir + "/manifest.txt", records);
    return records;
}

namespace {

std::array<int, 3> largest_remainder(int n, const std::array<double, 3>& ratios) {
    std::array<int, 3> alloc{};
    std::array<double, 3> frac{};
    int used = 0;
    for (int k = 0; k < 3; ++k) {
        const double exact = n * ratios[static_cast<size_t>(k)];
        alloc[static_cast<size_t>(k)] = static_cast<int>(std::floor(exact));
        frac[static_cast<size_t>(k)] = exact - alloc[static_cast<size_t>(k)];
        used += alloc[static_cast<size_t>(k)];
    }
    std::array<int, 3> order = {0, 1, 2};
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return frac[static_cast<size_t>(a)] > frac[static_cast<size_t>(b)]; });
    for (int i = 0; i < n - used; ++i) ++alloc[static_cast<size_t>(order[static_cast<size_t>(i)])];
    return alloc;
}

}  // namespace

void stratified_split(std::vector<SampleRecord>& records, double train_ratio, double val_ratio,
                      double test_ratio, uint64_t seed) {
    if (records.empty()) throw DataError("stratified_split: no records");
    const std::array<double, 3> R = {train_ratio, val_ratio, test_ratio};
    for (double r : R)
        if (r < 0.0) throw ConfigError("split ratios must be >= 0");
    if (std::abs(R[0] + R[1] + R[2] - 1.0) > 1e-9)
        throw ConfigError("split ratios must sum to 1");

    const int n = static_cast<int>(records.size());
    const std::array<int, 3> target = largest_remainder(n, R);

    struct Stratum {
        std::array<std::vector<int>, 3> chunk;  // record indices per split
        std::array<double, 3> exact{};
    };
    std::map<int, std::vector<int>> by_cat;
    for (int i = 0; i < n; ++i)
        by_cat[bmi_category(records[static_cast<size_t>(i)].bmi())].push_back(i);

    std::vector<Stratum> strata;
    for (auto& [cat, idx] : by_cat) {
        Rng rng(Rng::derive(seed, 0x5132A000u + static_cast<uint64_t>(cat)));
        rng.shuffle(idx);
        Stratum st;
        const std::array<int, 3> alloc = largest_remainder(static_cast<int>(idx.size()), R);
        size_t p = 0;
        for (int k = 0; k < 3; ++k) {
            for (int j = 0; j < alloc[static_cast<size_t>(k)]; ++j)
                st.chunk[static_cast<size_t>(k)].push_back(idx[p++]);
            st.exact[static_cast<size_t>(k)] = static_cast<double>(idx.size()) * R[static_cast<size_t>(k)];
        }
        strata.push_back(std::move(st));
    }

    std::array<int, 3> total{};
    for (const Stratum& st : strata)
        for (int k = 0; k < 3; ++k) total[static_cast<size_t>(k)] += static_cast<int>(st.chunk[static_cast<size_t>(k)].size());

    // Per-stratum rounding rarely sums to the global largest-remainder sizes;
    // shift single records between splits inside one stratum at a time,
    // always keeping each stratum within 1 of its exact share.
    auto deviation_ok = [](double size_after, double exact) {
        return std::abs(size_after - exact) <= 1.0 + 1e-9;
    };
    int guard = 4 * n + 16;
    while (total != target) {
        if (--guard < 0) throw DataError("stratified_split: rebalance did not converge");
        int from = -1, to = -1;
        for (int k = 0; k < 3; ++k) {
            if (from < 0 && total[static_cast<size_t>(k)] > target[static_cast<size_t>(k)]) from = k;
            if (to < 0 && total[static_cast<size_t>(k)] < target[static_cast<size_t>(k)]) to = k;
        }
        int best = -1;
        double best_score = -std::numeric_limits<double>::infinity();
        for (size_t si = 0; si < strata.size(); ++si) {
            Stratum& st = strata[si];
            const auto cf = static_cast<double>(st.chunk[static_cast<size_t>(from)].size());
            const auto ct = static_cast<double>(st.chunk[static_cast<size_t>(to)].size());
            if (st.chunk[static_cast<size_t>(from)].empty()) continue;
            if (!deviation_ok(cf - 1.0, st.exact[static_cast<size_t>(from)]) ||
                !deviation_ok(ct + 1.0, st.exact[static_cast<size_t>(to)]))
                continue;
            const double score = (cf - st.exact[static_cast<size_t>(from)]) -
                                 (ct - st.exact[static_cast<size_t>(to)]);
            if (score > best_score + 1e-12) {
                best_score = score;
                best = static_cast<int>(si);
            }
        }
        if (best >= 0) {
            Stratum& st = strata[static_cast<size_t>(best)];
            st.chunk[static_cast<size_t>(to)].push_back(st.chunk[static_cast<size_t>(from)].back());
            st.chunk[static_cast<size_t>(from)].pop_back();
            --total[static_cast<size_t>(from)];
            ++total[static_cast<size_t>(to)];
            continue;
        }
        // No stratum can shed `from` directly into `to`: route through the
        // most under-allocated split of a stratum that over-rounds `from`.
        bool moved = false;
        for (size_t si = 0; si < strata.size() && !moved; ++si) {
            Stratum& st = strata[si];
            const auto cf = static_cast<double>(st.chunk[static_cast<size_t>(from)].size());
            if (st.chunk[static_cast<size_t>(from)].empty()) continue;
            if (!deviation_ok(cf - 1.0, st.exact[static_cast<size_t>(from)])) continue;
            int mid = -1;
            double worst = std::numeric_limits<double>::infinity();
            for (int k = 0; k < 3; ++k) {
                if (k == from) continue;
                const double d = static_cast<double>(st.chunk[static_cast<size_t>(k)].size()) -
                                 st.exact[static_cast<size_t>(k)];
                if (d < worst && deviation_ok(st.chunk[static_cast<size_t>(k)].size() + 1.0,
                                              st.exact[static_cast<size_t>(k)])) {
                    worst = d;
                    mid = k;
                }
            }
            if (mid < 0) continue;
            st.chunk[static_cast<size_t>(mid)].push_back(st.chunk[static_cast<size_t>(from)].back());
            st.chunk[static_cast<size_t>(from)].pop_back();
            --total[static_cast<size_t>(from)];
            ++total[static_cast<size_t>(mid)];
            moved = true;
        }
        if (!moved) throw DataError("stratified_split: rebalance is stuck");
    }

    const Split split_of[3] = {Split::Train, Split::Val, Split::Test};
    for (const Stratum& st : strata)
        for (int k = 0; k < 3; ++k)
            for (int i : st.chunk[static_cast<size_t>(k)])
                records[static_cast<size_t>(i)].split = split_of[k];
}

void save_manifest(const std::string& path, const std::vector<SampleRecord>& records) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw IoError("cannot open for writing: " + path);
    os << "# image_path\tx\ty\tw\th\tbfp\tsex\theight\tweight\tsplit\n";
    for (const SampleRecord& r : records) {
        os << r.image_path << '\t' << format_double(r.x) << '\t' << format_double(r.y) << '\t'
           << format_double(r.w) << '\t' << format_double(r.h) << '\t' << format_double(r.bfp)
           << '\t' << sex_str(r.sex) << '\t' << format_double(r.height) << '\t'
           << format_double(r.weight) << '\t' << split_str(r.split) << '\n';
    }
    os.flush();
    if (!os) throw IoError("failed writing: " + path);
}

std::vector<SampleRecord> load_manifest(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open: " + path);
    std::vector<SampleRecord> out;
    std::string line;
    int line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        if (line.empty() || line[0] == '#') continue;
        std::vector<std::string> fields;
        size_t start = 0;
        while (true) {
            const size_t tab = line.find('\t', start);
            if (tab == std::string::npos) {
                fields.push_back(line.substr(start));
                break;
            }
            fields.push_back(line.substr(start, tab - start));
            start = tab + 1;
        }
        const std::string where = path + " line " + std::to_string(line_no);
        if (fields.size() != 10)
            throw ParseError(where + ": expected 10 tab-separated fields, got " +
                             std::to_string(fields.size()));
        SampleRecord r;
        try {
            r.image_path = fields[0];
            r.x = parse_double(fields[1]);
            r.y = parse_double(fields[2]);
            r.w = parse_double(fields[3]);
            r.h = parse_double(fields[4]);
            r.bfp = parse_double(fields[5]);
            r.sex = parse_sex(fields[6]);
            r.height = parse_double(fields[7]);
            r.weight = parse_double(fields[8]);
            r.split = parse_split(fields[9]);
        } catch (const ParseError& e) {
            throw ParseError(where + ": " + e.what());
        }
        try {
            r.validate();
        } catch (const DataError& e) {
            throw DataError(where + ": " + e.what());
        }
        out.push_back(std::move(r));
    }
    return out;
}

std::vector<double> image_to_channels(const GrayImage& img) {
    const size_t plane = static_cast<size_t>(img.width) * static_cast<size_t>(img.height);
    std::vector<double> out(3 * plane);
    for (size_t i = 0; i < plane; ++i) {
        const double v = img.pixels[i] / 255.0;
        out[i] = v;
        out[plane + i] = v;
        out[2 * plane + i] = v;
    }
    return out;
}

}  // namespace shapednet
