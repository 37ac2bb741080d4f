#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "shapednet/network.hpp"

namespace shapednet {

struct LossWeights {
    double lambda_coord = 5.0;
    double lambda_noobj = 0.5;
    double lambda_f = 1.0;
    void validate() const;  // all >= 0
};

enum class BfLossMode { Signed, Absolute, Squared };

// One ground-truth object: normalized center-format box plus class.
struct GroundTruth {
    double x = 0, y = 0, w = 0, h = 0;
    int class_id = 0;
};

// A responsible (cell, anchor) slot with its regression targets.
struct ObjSlot {
    int cell_y = 0, cell_x = 0, anchor = 0;  // anchor within the head (0..2)
    double x = 0, y = 0, w = 0, h = 0;       // normalized target box
    int class_id = 0;
};

struct HeadTarget {
    int grid = 0;                  // cells per side
    std::vector<uint8_t> obj;      // responsibility mask over grid*grid*3 slots
    std::vector<uint8_t> noobj;    // complement of obj
    std::vector<ObjSlot> objects;  // the responsible slots, in assignment order
};

// Per-image targets across the three scales (order matches RawOutputs.heads)
// plus the regression target.
struct GridTarget {
    std::array<HeadTarget, 3> heads;
    double bfp = 0;  // percent
};

// Places each object at the single scale owning its best-IoU anchor
// (co-centered matching); the cell containing the box center and that anchor
// become responsible.
GridTarget assign_targets(const std::vector<GroundTruth>& objects, double bfp,
                          const NetworkConfig& cfg);

struct LossBreakdown {
    double coord_xy = 0, coord_wh = 0, obj_conf = 0, noobj_conf = 0,
           classification = 0, bodyfat = 0, total = 0;
};

// Five differentiable detection terms (coord_xy, coord_wh, obj_conf,
// noobj_conf, classification), each summed over all grid slots of all images
// and divided by the number of images.
std::array<Tensor, 5> detection_loss(const RawOutputs& pred,
                                     const std::vector<GridTarget>& targets,
                                     const LossWeights& w, const NetworkConfig& cfg);

// Body-fat term for one subject: signed lambda_f*(b-b_hat)/b, absolute
// lambda_f*|b-b_hat|/b, or squared lambda_f*((b-b_hat)/b)^2.
Tensor bf_loss(const Tensor& b_hat, double b, double lambda_f, BfLossMode mode);
double bf_loss_value(double b, double b_hat, double lambda_f, BfLossMode mode);

struct LossResult {
    Tensor total;                  // [1]; differentiable
    std::array<Tensor, 6> terms;   // differentiable individual terms
    LossBreakdown breakdown;       // scalar copies; total = left-to-right sum
};

LossResult total_loss(const RawOutputs& pred, const std::vector<GridTarget>& targets,
                      const LossWeights& w, BfLossMode mode, const NetworkConfig& cfg);

}  // namespace shapednet
