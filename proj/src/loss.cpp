#include "shapednet/loss.hpp"

#include <cmath>
#include <string>

namespace shapednet {

void LossWeights::validate() const {
    if (lambda_coord < 0 || lambda_noobj < 0 || lambda_f < 0)
        throw ConfigError("loss weights must be >= 0");
}

namespace {

// IoU of two boxes sharing a center: reduces to overlap of extents.
double centered_iou(double w1, double h1, double w2, double h2) {
    const double inter = std::min(w1, w2) * std::min(h1, h2);
    const double uni = w1 * h1 + w2 * h2 - inter;
    return inter / uni;
}

}  // namespace

GridTarget assign_targets(const std::vector<GroundTruth>& objects, double bfp,
                          const NetworkConfig& cfg) {
    cfg.validate();
    GridTarget t;
    t.bfp = bfp;
    for (int h = 0; h < 3; ++h) {
        HeadTarget& ht = t.heads[static_cast<size_t>(h)];
        const int stride = 32 >> h;  // heads run at strides 32, 16, 8
        ht.grid = cfg.input_size / stride;
        const size_t slots = static_cast<size_t>(ht.grid) * ht.grid * 3;
        ht.obj.assign(slots, 0);
        ht.noobj.assign(slots, 1);
    }
    for (const GroundTruth& g : objects) {
        if (!(g.w > 0.0) || !(g.h > 0.0))
            throw DataError("ground-truth box must have positive extents");
        if (g.x < 0.0 || g.x > 1.0 || g.y < 0.0 || g.y > 1.0 || g.w > 1.0 || g.h > 1.0)
            throw DataError("ground-truth box out of the normalized range");
        if (g.class_id < 0 || g.class_id >= cfg.num_classes)
            throw DataError("ground-truth class_id " + std::to_string(g.class_id) +
                            " out of range for " + std::to_string(cfg.num_classes) + " classes");
        int best_k = 0;
        double best_iou = -1.0;
        for (int k = 0; k < 9; ++k) {
            const AnchorPair& a = cfg.anchors[static_cast<size_t>(k)];
            const double v = centered_iou(g.w, g.h, a.w, a.h);
            if (v > best_iou) {
                best_iou = v;
                best_k = k;
            }
        }
        const int head_idx = 2 - best_k / 3;  // anchors 6..8 belong to the stride-32 head
        const int anchor_in_head = best_k % 3;
        HeadTarget& ht = t.heads[static_cast<size_t>(head_idx)];
        const int cx = std::min(ht.grid - 1, static_cast<int>(g.x * ht.grid));
        const int cy = std::min(ht.grid - 1, static_cast<int>(g.y * ht.grid));
        const size_t slot = (static_cast<size_t>(cy) * ht.grid + cx) * 3 +
                            static_cast<size_t>(anchor_in_head);
        if (ht.obj[slot])
            throw DataError("two objects map to the same cell/anchor slot");
        ht.obj[slot] = 1;
        ht.noobj[slot] = 0;
        ht.objects.push_back({cy, cx, anchor_in_head, g.x, g.y, g.w, g.h, g.class_id});
    }
    return t;
}

std::array<Tensor, 5> detection_loss(const RawOutputs& pred,
                                     const std::vector<GridTarget>& targets,
                                     const LossWeights& w, const NetworkConfig& cfg) {
    w.validate();
    if (targets.empty()) throw DataError("detection_loss: no targets");
    const int N = static_cast<int>(targets.size());
    const int F = cfg.det_features();
    for (int h = 0; h < 3; ++h) {
        const Tensor& head = pred.heads[static_cast<size_t>(h)];
        if (!head.defined() || head.rank() != 5 || head.dim(0) != N || head.dim(3) != 3 ||
            head.dim(4) != F)
            throw DimensionError("detection_loss: head " + std::to_string(h) +
                                 " has unexpected shape");
    }
    std::vector<Tensor> xy_terms, wh_terms, obj_terms, cls_terms;
    for (int n = 0; n < N; ++n) {
        const GridTarget& gt = targets[static_cast<size_t>(n)];
        for (int h = 0; h < 3; ++h) {
            const HeadTarget& ht = gt.heads[static_cast<size_t>(h)];
            const Tensor& head = pred.heads[static_cast<size_t>(h)];
            const int g = head.dim(1);
            if (ht.grid != g)
                throw DimensionError("detection_loss: target grid does not match head grid");
            const std::array<AnchorPair, 3> anchors = cfg.head_anchors(h);
            for (const ObjSlot& o : ht.objects) {
                const int64_t base =
                    (((static_cast<int64_t>(n) * g + o.cell_y) * g + o.cell_x) * 3 + o.anchor) *
                    F;
                // Decoded center/size as differentiable scalars.
                Tensor px = mul_scalar(
                    add_scalar(sigmoid(gather_scalar(head, base + 0)), o.cell_x), 1.0 / g);
                Tensor py = mul_scalar(
                    add_scalar(sigmoid(gather_scalar(head, base + 1)), o.cell_y), 1.0 / g);
                Tensor pw = mul_scalar(exp_op(gather_scalar(head, base + 2)),
                                       anchors[static_cast<size_t>(o.anchor)].w);
                Tensor ph = mul_scalar(exp_op(gather_scalar(head, base + 3)),
                                       anchors[static_cast<size_t>(o.anchor)].h);
                xy_terms.push_back(square(add_scalar(px, -o.x)));
                xy_terms.push_back(square(add_scalar(py, -o.y)));
                wh_terms.push_back(square(add_scalar(sqrt_op(pw), -std::sqrt(o.w))));
                wh_terms.push_back(square(add_scalar(sqrt_op(ph), -std::sqrt(o.h))));
                obj_terms.push_back(
                    square(rsub_scalar(1.0, sigmoid(gather_scalar(head, base + 4)))));
                for (int c = 0; c < cfg.num_classes; ++c) {
                    const double target = c == o.class_id ? 1.0 : 0.0;
                    cls_terms.push_back(square(
                        rsub_scalar(target, sigmoid(gather_scalar(head, base + 5 + c)))));
                }
            }
        }
    }
    // No-object confidences: one masked sum of squares per head over the
    // sigmoid of the whole tensor; the mask selects confidence features of
    // non-responsible slots.
    std::vector<Tensor> noobj_terms;
    for (int h = 0; h < 3; ++h) {
        const Tensor& head = pred.heads[static_cast<size_t>(h)];
        const int g = head.dim(1);
        std::vector<double> weights(static_cast<size_t>(head.numel()), 0.0);
        const size_t per_image = static_cast<size_t>(g) * g * 3;
        for (int n = 0; n < N; ++n) {
            const HeadTarget& ht = targets[static_cast<size_t>(n)].heads[static_cast<size_t>(h)];
            for (size_t s = 0; s < per_image; ++s)
                if (ht.noobj[s])
                    weights[(static_cast<size_t>(n) * per_image + s) * F + 4] = 1.0;
        }
        noobj_terms.push_back(weighted_sumsq(sigmoid(head), weights));
    }
    auto reduce = [&](std::vector<Tensor>& terms, double scale) {
        if (terms.empty()) return Tensor::scalar(0.0);
        return mul_scalar(add_n(terms), scale);
    };
    const double inv_n = 1.0 / static_cast<double>(N);
    std::array<Tensor, 5> out = {
        reduce(xy_terms, w.lambda_coord * inv_n), reduce(wh_terms, w.lambda_coord * inv_n),
        reduce(obj_terms, inv_n), reduce(noobj_terms, w.lambda_noobj * inv_n),
        reduce(cls_terms, inv_n)};
    return out;
}

Tensor bf_loss(const Tensor& b_hat, double b, double lambda_f, BfLossMode mode) {
    if (!(b > 0.0)) throw DataError("body-fat ground truth must be positive");
    if (lambda_f < 0.0) throw ConfigError("lambda_f must be >= 0");
    if (b_hat.numel() != 1) throw DimensionError("bf_loss expects a scalar prediction");
    Tensor diff = rsub_scalar(b, b_hat);  // b - b_hat
    switch (mode) {
        case BfLossMode::Signed:
            return mul_scalar(diff, lambda_f / b);
        case BfLossMode::Absolute:
            return mul_scalar(abs_op(diff), lambda_f / b);
        case BfLossMode::Squared:
            return mul_scalar(square(mul_scalar(diff, 1.0 / b)), lambda_f);
    }
    throw ParameterError("unknown body-fat loss mode");
}

double bf_loss_value(double b, double b_hat, double lambda_f, BfLossMode mode) {
    if (!(b > 0.0)) throw DataError("body-fat ground truth must be positive");
    const double diff = b - b_hat;
    switch (mode) {
        case BfLossMode::Signed:
            return diff * (lambda_f / b);
        case BfLossMode::Absolute:
            return std::abs(diff) * (lambda_f / b);
        case BfLossMode::Squared: {
            const double r = diff * (1.0 / b);
            return r * r * lambda_f;
        }
    }
    throw ParameterError("unknown body-fat loss mode");
}

LossResult total_loss(const RawOutputs& pred, const std::vector<GridTarget>& targets,
                      const LossWeights& w, BfLossMode mode, const NetworkConfig& cfg) {
    std::array<Tensor, 5> det = detection_loss(pred, targets, w, cfg);
    const int N = static_cast<int>(targets.size());
    Tensor bf_term;
    if (pred.bf.defined()) {
        if (pred.bf.numel() != N)
            throw DimensionError("total_loss: regression output count does not match targets");
        std::vector<Tensor> per;
        per.reserve(static_cast<size_t>(N));
        for (int n = 0; n < N; ++n)
            per.push_back(bf_loss(gather_scalar(pred.bf, n), targets[static_cast<size_t>(n)].bfp,
                                  w.lambda_f, mode));
        bf_term = mul_scalar(add_n(per), 1.0 / static_cast<double>(N));
    } else {
        bf_term = Tensor::scalar(0.0);
    }
    LossResult r;
    r.terms = {det[0], det[1], det[2], det[3], det[4], bf_term};
    Tensor total = det[0];
    for (int k = 1; k < 5; ++k) total = add(total, det[static_cast<size_t>(k)]);
    total = add(total, bf_term);
    r.total = total;
    r.breakdown.coord_xy = det[0].scalar_value();
    r.breakdown.coord_wh = det[1].scalar_value();
    r.breakdown.obj_conf = det[2].scalar_value();
    r.breakdown.noobj_conf = det[3].scalar_value();
    r.breakdown.classification = det[4].scalar_value();
    r.breakdown.bodyfat = bf_term.scalar_value();
    r.breakdown.total = total.scalar_value();
    return r;
}

}  // namespace shapednet
