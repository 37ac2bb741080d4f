#include "shapednet/postprocess.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace shapednet {

namespace {

double sig(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

}  // namespace

std::vector<Detection> decode_head(const Tensor& head,
                                   const std::array<AnchorPair, 3>& anchors,
                                   double conf_threshold) {
    if (head.rank() != 4 || head.dim(0) != head.dim(1) || head.dim(2) != 3 || head.dim(3) < 5)
        throw DimensionError("decode_head expects one image's [cs,cs,3,5+nc] grid, got " +
                             shape_str(head.shape()));
    const int g = head.dim(0);
    const int F = head.dim(3);
    const int nc = F - 5;
    const std::vector<double>& v = head.values();
    std::vector<Detection> out;
    for (int cy = 0; cy < g; ++cy) {
        for (int cx = 0; cx < g; ++cx) {
            for (int a = 0; a < 3; ++a) {
                const size_t base =
                    ((static_cast<size_t>(cy) * g + cx) * 3 + static_cast<size_t>(a)) *
                    static_cast<size_t>(F);
                const double conf = sig(v[base + 4]);
                if (conf < conf_threshold) continue;
                Detection d;
                d.box.x = (sig(v[base + 0]) + cx) / g;
                d.box.y = (sig(v[base + 1]) + cy) / g;
                d.box.w = anchors[static_cast<size_t>(a)].w * std::exp(v[base + 2]);
                d.box.h = anchors[static_cast<size_t>(a)].h * std::exp(v[base + 3]);
                d.confidence = conf;
                d.class_probs.resize(static_cast<size_t>(nc));
                d.class_id = 0;
                for (int c = 0; c < nc; ++c) {
                    d.class_probs[static_cast<size_t>(c)] = sig(v[base + 5 + static_cast<size_t>(c)]);
                    if (d.class_probs[static_cast<size_t>(c)] >
                        d.class_probs[static_cast<size_t>(d.class_id)])
                        d.class_id = c;
                }
                out.push_back(std::move(d));
            }
        }
    }
    return out;
}

double iou(const Box& a, const Box& b) {
    const double ax0 = a.x - a.w / 2, ax1 = a.x + a.w / 2;
    const double ay0 = a.y - a.h / 2, ay1 = a.y + a.h / 2;
    const double bx0 = b.x - b.w / 2, bx1 = b.x + b.w / 2;
    const double by0 = b.y - b.h / 2, by1 = b.y + b.h / 2;
    const double iw = std::max(0.0, std::min(ax1, bx1) - std::max(ax0, bx0));
    const double ih = std::max(0.0, std::min(ay1, by1) - std::max(ay0, by0));
    const double inter = iw * ih;
    const double uni = a.w * a.h + b.w * b.h - inter;
    return uni > 0.0 ? inter / uni : 0.0;
}

std::vector<Detection> nms(const std::vector<Detection>& dets, double iou_threshold) {
    if (iou_threshold < 0.0 || iou_threshold > 1.0)
        throw ParameterError("nms threshold must be in [0,1]");
    std::vector<size_t> order(dets.size());
    std::iota(order.begin(), order.end(), size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
        return dets[a].confidence > dets[b].confidence;  // stable: ties keep input order
    });
    std::vector<bool> suppressed(dets.size(), false);
    std::vector<Detection> out;
    for (size_t i = 0; i < order.size(); ++i) {
        if (suppressed[order[i]]) continue;
        const Detection& keep = dets[order[i]];
        out.push_back(keep);
        for (size_t j = i + 1; j < order.size(); ++j) {
            if (suppressed[order[j]]) continue;
            if (iou(keep.box, dets[order[j]].box) >= iou_threshold) suppressed[order[j]] = true;
        }
    }
    return out;
}

}  // namespace shapednet
