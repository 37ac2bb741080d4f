#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "shapednet/errors.hpp"
#include "shapednet/png_io.hpp"
#include "shapednet/rng.hpp"

namespace shapednet {

enum class Sex { Male, Female };
enum class Split { Unassigned, Train, Val, Test };

const char* sex_str(Sex s);
const char* split_str(Split s);
Sex parse_sex(const std::string& s);
Split parse_split(const std::string& s);

struct SampleRecord {
    std::string image_path;             // relative to the manifest directory
    double x = 0, y = 0, w = 0, h = 0;  // normalized center-format bbox
    double bfp = 0;                     // percent
    Sex sex = Sex::Male;
    double height = 0;  // meters
    double weight = 0;  // kg
    Split split = Split::Unassigned;

    double bmi() const;  // weight / height^2
    void validate() const;
};

struct SyntheticSpec {
    int count = 0;
    int image_size = 64;
    double fat_lo = 0.0, fat_hi = 1.0;  // fatness s sampled uniformly
    double sex_ratio = 0.5;             // fraction female
    uint64_t seed = 0;
    void validate() const;
};

// Linear map of fatness onto the observed body-fat range 9.30..57.60.
double synthetic_bfp(double s);
double compute_bmi(double weight, double height);
// Six strata, 1-based: <18.5 | [18.5,25) | [25,30) | [30,35) | [35,40) | >=40.
int bmi_category(double bmi);

// Renders one front-view silhouette: head circle, torso whose width grows
// with s (shoulder/hip profile differs by sex), arm and leg rectangles;
// anti-aliased dark-on-white. Exposed for generator tests.
GrayImage render_silhouette(int image_size, double s, Sex sex, Rng& rng);

// Writes count silhouette PNGs plus "manifest.txt" into out_dir; returns the
// records (splits unassigned). Deterministic per spec.seed.
std::vector<SampleRecord> generate_synthetic_dataset(const SyntheticSpec& spec,
                                                     const std::string& out_dir);

// In-place split assignment: per-BMI-stratum seeded shuffle + largest-
// remainder allocation, then a minimal deterministic rebalance so the global
// split sizes equal the largest-remainder rounding of the full count while
// every stratum stays within 1 record of its exact proportions.
void stratified_split(std::vector<SampleRecord>& records, double train_ratio,
                      double val_ratio, double test_ratio, uint64_t seed);

void save_manifest(const std::string& path, const std::vector<SampleRecord>& records);
std::vector<SampleRecord> load_manifest(const std::string& path);

// Loads a sample's PNG and normalizes it into a [3,S,S] tensor in [0,1]
// (grayscale replicated across channels).
std::vector<double> image_to_channels(const GrayImage& img);

}  // namespace shapednet
