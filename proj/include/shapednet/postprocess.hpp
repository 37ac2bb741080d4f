#pragma once

#include <array>
#include <vector>

#include "shapednet/network.hpp"

namespace shapednet {

struct Box {
    double x = 0, y = 0, w = 0, h = 0;  // normalized center format
};

struct Detection {
    Box box;
    double confidence = 0;
    std::vector<double> class_probs;
    int class_id = 0;
};

// head: one image's [cs,cs,3,5+nc] grid; anchors: this scale's triple.
// Decode per slot: center (sigma(t)+cell)/cs, size anchor*exp(t),
// confidence sigma(t_o); emits slots with confidence >= threshold.
std::vector<Detection> decode_head(const Tensor& head,
                                   const std::array<AnchorPair, 3>& anchors,
                                   double conf_threshold);

// Intersection over union of center-format boxes; 0 when the union is empty.
double iou(const Box& a, const Box& b);

// Greedy suppression: repeatedly keep the highest-confidence detection and
// drop others overlapping it with IoU >= threshold. Output sorted by
// confidence descending, ties broken by earlier input index.
std::vector<Detection> nms(const std::vector<Detection>& dets, double iou_threshold);

}  // namespace shapednet
