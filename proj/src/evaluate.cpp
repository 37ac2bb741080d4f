#include "shapednet/evaluate.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

#include "shapednet/format.hpp"
#include "shapednet/png_io.hpp"

namespace shapednet {

std::vector<SubjectResult> run_inference(ShapedNetModel& model,
                                         const std::vector<SampleRecord>& records,
                                         const std::string& image_root, double conf_threshold,
                                         double nms_threshold) {
    NoGradGuard guard;
    const NetworkConfig& nc = model.config;
    const int S = nc.input_size;
    std::vector<SubjectResult> out;
    out.reserve(records.size());
    int idx = 0;
    for (const SampleRecord& rec : records) {
        const std::string path =
            image_root.empty() ? rec.image_path : image_root + "/" + rec.image_path;
        GrayImage img = read_png_gray(path);
        if (img.width != S || img.height != S)
            throw DimensionError("image " + path + " is " + std::to_string(img.width) + "x" +
                                 std::to_string(img.height) + ", expected " + std::to_string(S) +
                                 "x" + std::to_string(S));
        Tensor images = Tensor::from({1, 3, S, S}, image_to_channels(img));
        RawOutputs ro = forward(model, images, false, nullptr);
        std::vector<Detection> dets;
        for (int h = 0; h < 3; ++h) {
            const Tensor& head = ro.heads[static_cast<size_t>(h)];
            Tensor grid = Tensor::from({head.dim(1), head.dim(2), head.dim(3), head.dim(4)},
                                       head.values());
            std::vector<Detection> d = decode_head(grid, nc.head_anchors(h), conf_threshold);
            dets.insert(dets.end(), d.begin(), d.end());
        }
        std::vector<Detection> kept = nms(dets, nms_threshold);
        SubjectResult r;
        r.index = idx++;
        r.b = rec.bfp;
        r.b_hat = nc.regression_branch ? ro.bf.values()[0] : 0.0;
        r.sex = rec.sex;
        if (!kept.empty()) {
            r.detected = true;
            r.best_box = kept[0].box;
            r.best_conf = kept[0].confidence;
            r.iou_vs_truth = iou(r.best_box, Box{rec.x, rec.y, rec.w, rec.h});
        }
        out.push_back(r);
    }
    return out;
}

namespace {

void fill_metric(MetricReport& m, const MeanSd& stat, const std::vector<double>& samples) {
    m.stat = stat;
    if (samples.size() >= 2) {
        m.ci_available = true;
        m.ci = t_confidence_interval(samples, 0.05);
        m.spread_v = spread(m.ci);
    }
}

std::string fmt2(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

// Rendered p-values floor at .001, APA style (no leading zero).
std::string fmt_p(double p) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3f", std::max(p, 0.001));
    std::string s = buf;
    if (s.rfind("0.", 0) == 0) s = s.substr(1);
    return s;
}

std::string ci_cell(const MetricReport& m) {
    if (!m.ci_available) return "n/a (n<2)";
    return "[" + fmt2(m.ci.lo) + ", " + fmt2(m.ci.hi) + "] v=" + fmt2(m.spread_v);
}

void machine_metric(std::ostringstream& os, const char* prefix, const MetricReport& m) {
    os << " " << prefix << "_mean=" << format_double(m.stat.mean) << " " << prefix
       << "_sd=" << format_double(m.stat.sd);
    if (m.ci_available)
        os << " " << prefix << "_ci_lo=" << format_double(m.ci.lo) << " " << prefix
           << "_ci_hi=" << format_double(m.ci.hi) << " " << prefix
           << "_spread=" << format_double(m.spread_v);
    else
        os << " " << prefix << "_ci_lo=na " << prefix << "_ci_hi=na " << prefix
           << "_spread=na";
}

}  // namespace

EvalReport evaluate_results(const std::vector<SubjectResult>& results,
                            const std::string& split_name) {
    if (results.empty()) throw DataError("no results to evaluate");
    EvalReport rep;
    rep.split_name = split_name;
    auto add_group = [&](const std::string& name, auto keep) {
        std::vector<BfPair> pairs;
        std::vector<double> s_mape, s_mae, s_msd;
        for (const SubjectResult& r : results) {
            if (!keep(r)) continue;
            pairs.push_back({r.b, r.b_hat});
            s_mape.push_back(100.0 * std::abs(r.b_hat - r.b) / r.b);
            s_mae.push_back(std::abs(r.b_hat - r.b));
            s_msd.push_back(r.b_hat - r.b);
        }
        if (pairs.empty()) return;
        GroupMetrics g;
        g.name = name;
        g.n = static_cast<int>(pairs.size());
        fill_metric(g.mape, mape(pairs), s_mape);
        fill_metric(g.mae, mae(pairs), s_mae);
        fill_metric(g.msd, msd(pairs), s_msd);
        g.success = g.mape.stat.mean < 10.0;
        rep.groups.push_back(std::move(g));
    };
    add_group("male", [](const SubjectResult& r) { return r.sex == Sex::Male; });
    add_group("female", [](const SubjectResult& r) { return r.sex == Sex::Female; });
    add_group("gender-neutral", [](const SubjectResult&) { return true; });
    return rep;
}

std::string EvalReport::render_table() const {
    std::ostringstream os;
    os << "Split: " << split_name << "\n";
    char buf[160];
    std::snprintf(buf, sizeof buf, "%-16s %5s  %-18s %-18s %-18s %s\n", "group", "n",
                  "MAPE% (mean+/-sd)", "MAE (mean+/-sd)", "MSD (mean+/-sd)", "MAPE<10%");
    os << buf;
    for (const GroupMetrics& g : groups) {
        const std::string m1 = fmt2(g.mape.stat.mean) + " +/- " + fmt2(g.mape.stat.sd);
        const std::string m2 = fmt2(g.mae.stat.mean) + " +/- " + fmt2(g.mae.stat.sd);
        const std::string m3 = fmt2(g.msd.stat.mean) + " +/- " + fmt2(g.msd.stat.sd);
        std::snprintf(buf, sizeof buf, "%-16s %5d  %-18s %-18s %-18s %s\n", g.name.c_str(), g.n,
                      m1.c_str(), m2.c_str(), m3.c_str(), g.success ? "yes" : "no");
        os << buf;
    }
    os << "95% confidence intervals (spread v = interval width):\n";
    for (const GroupMetrics& g : groups) {
        os << "  " << g.name << ": MAPE " << ci_cell(g.mape) << " | MAE " << ci_cell(g.mae)
           << " | MSD " << ci_cell(g.msd) << "\n";
    }
    if (!tukey.empty()) {
        os << "Tukey HSD on absolute errors:\n";
        for (const TukeyPair& t : tukey)
            os << "  " << t.group_a << " vs " << t.group_b << ": MD=" << fmt2(t.md)
               << " p=" << fmt_p(t.p) << (t.reject ? " (significant)" : " (n.s.)") << "\n";
    }
    return os.str();
}

std::string EvalReport::render_machine() const {
    std::ostringstream os;
    for (const GroupMetrics& g : groups) {
        os << "split=" << split_name << " group=" << g.name << " n=" << g.n;
        machine_metric(os, "mape", g.mape);
        machine_metric(os, "mae", g.mae);
        machine_metric(os, "msd", g.msd);
        os << " success=" << (g.success ? 1 : 0) << "\n";
    }
    for (const TukeyPair& t : tukey)
        os << "tukey a=" << t.group_a << " b=" << t.group_b << " md=" << format_double(t.md)
           << " p=" << format_double(t.p) << " reject=" << (t.reject ? 1 : 0) << "\n";
    return os.str();
}

std::vector<TukeyPair> compare_variants(
    const std::vector<std::pair<std::string, std::vector<SubjectResult>>>& variants,
    double alpha) {
    if (variants.size() < 2) throw DataError("compare_variants requires at least 2 variants");
    std::vector<NamedSamples> groups;
    for (const auto& [name, results] : variants) {
        NamedSamples g;
        g.name = name;
        for (const SubjectResult& r : results) g.values.push_back(std::abs(r.b_hat - r.b));
        groups.push_back(std::move(g));
    }
    return tukey_hsd(groups, alpha);
}

}  // namespace shapednet
