#pragma once

#include <string>
#include <vector>

#include "shapednet/data.hpp"
#include "shapednet/network.hpp"
#include "shapednet/postprocess.hpp"
#include "shapednet/stats.hpp"

namespace shapednet {

struct SubjectResult {
    int index = 0;  // position within the evaluated record list
    double b = 0, b_hat = 0;
    Sex sex = Sex::Male;
    bool detected = false;  // any detection above threshold after NMS
    Box best_box;           // highest-confidence detection
    double best_conf = 0;
    double iou_vs_truth = 0;
};

// Deterministic per-subject inference (decode + NMS across the three heads).
std::vector<SubjectResult> run_inference(ShapedNetModel& model,
                                         const std::vector<SampleRecord>& records,
                                         const std::string& image_root,
                                         double conf_threshold, double nms_threshold);

struct MetricReport {
    MeanSd stat;
    bool ci_available = false;  // n >= 2
    ConfInterval ci;
    double spread_v = 0;
};

struct GroupMetrics {
    std::string name;  // "male" | "female" | "gender-neutral"
    int n = 0;
    MetricReport mape, mae, msd;
    bool success = false;  // MAPE mean < 10 (errors-below-10% bar)
};

struct EvalReport {
    std::string split_name;
    std::vector<GroupMetrics> groups;
    std::vector<TukeyPair> tukey;  // present when >= 2 variants compared

    // Human-readable tables (metrics per group; Tukey pairs when present;
    // rendered p-values floor at .001, raw values stay in machine output).
    std::string render_table() const;
    // Line-delimited machine records, fixed field order.
    std::string render_machine() const;
};

// Metrics + t-intervals + spreads for the male / female / gender-neutral
// groupings of one result set.
EvalReport evaluate_results(const std::vector<SubjectResult>& results,
                            const std::string& split_name);

// Tukey HSD across >= 2 named variants' absolute errors, appended to a
// report.
std::vector<TukeyPair> compare_variants(
    const std::vector<std::pair<std::string, std::vector<SubjectResult>>>& variants,
    double alpha = 0.05);

}  // namespace shapednet
