#include <cmath>

#include "doctest.h"
#include "shapednet/postprocess.hpp"

using namespace shapednet;

namespace {

const std::array<AnchorPair, 3> kAnchors = {
    AnchorPair{0.1, 0.2}, AnchorPair{0.3, 0.4}, AnchorPair{0.5, 0.6}};

Detection det(double x, double y, double w, double h, double conf) {
    Detection d;
    d.box = Box{x, y, w, h};
    d.confidence = conf;
    return d;
}

}  // namespace

TEST_SUITE("postprocess") {
    TEST_CASE("a neutral slot in cell (5,5) decodes to the cell center") {
        const int g = 13;
        std::vector<double> v(static_cast<size_t>(g) * g * 3 * 6, 0.0);
        for (size_t s = 0; s < v.size() / 6; ++s) v[s * 6 + 4] = -800.0;
        const size_t base = ((5 * g + 5) * 3 + 1) * 6;
        v[base + 4] = 0.0;  // confidence sigma(0) = 0.5
        Tensor head = Tensor::from({g, g, 3, 6}, std::move(v));
        std::vector<Detection> dets = decode_head(head, kAnchors, 0.5);
        REQUIRE(dets.size() == 1);
        CHECK(dets[0].box.x == 5.5 / 13.0);
        CHECK(dets[0].box.y == 5.5 / 13.0);
        CHECK(dets[0].box.w == kAnchors[1].w);  // exp(0) = 1 exactly
        CHECK(dets[0].box.h == kAnchors[1].h);
        CHECK(dets[0].confidence == 0.5);
    }

    TEST_CASE("threshold is inclusive and saturating logits can reach it") {
        std::vector<double> v(static_cast<size_t>(2) * 2 * 3 * 6, 0.0);
        Tensor head = Tensor::from({2, 2, 3, 6}, std::move(v));
        CHECK(decode_head(head, kAnchors, 1.0).empty());  // sigma(0) = 0.5 < 1
        CHECK(decode_head(head, kAnchors, 0.5).size() == 12);   // equality kept
        CHECK(decode_head(head, kAnchors, 0.5001).empty());
        std::vector<double> w(static_cast<size_t>(2) * 2 * 3 * 6, 0.0);
        w[4] = 800.0;  // sigma saturates to exactly 1.0
        Tensor head2 = Tensor::from({2, 2, 3, 6}, std::move(w));
        CHECK(decode_head(head2, kAnchors, 1.0).size() == 1);
    }

    TEST_CASE("decode applies the documented slot formulas") {
        const int g = 2;
        const double l3 = std::log(3.0);
        std::vector<double> v(static_cast<size_t>(g) * g * 3 * 7, -800.0);
        const size_t base = ((1 * g + 0) * 3 + 2) * 7;  // cy=1, cx=0, anchor 2
        v[base + 0] = l3;             // sigma = 0.75
        v[base + 1] = -l3;            // sigma = 0.25
        v[base + 2] = std::log(2.0);  // w = 2 * anchor_w
        v[base + 3] = 0.0;
        v[base + 4] = l3;
        v[base + 5] = -l3;  // class 0 prob 0.25
        v[base + 6] = l3;   // class 1 prob 0.75
        Tensor head = Tensor::from({g, g, 3, 7}, std::move(v));
        std::vector<Detection> dets = decode_head(head, kAnchors, 0.6);
        REQUIRE(dets.size() == 1);
        const Detection& d = dets[0];
        CHECK(d.box.x == doctest::Approx((0.75 + 0) / 2.0).epsilon(1e-12));
        CHECK(d.box.y == doctest::Approx((0.25 + 1) / 2.0).epsilon(1e-12));
        CHECK(d.box.w == doctest::Approx(2.0 * kAnchors[2].w).epsilon(1e-12));
        CHECK(d.box.h == kAnchors[2].h);
        CHECK(d.confidence == doctest::Approx(0.75).epsilon(1e-12));
        REQUIRE(d.class_probs.size() == 2);
        CHECK(d.class_probs[0] == doctest::Approx(0.25).epsilon(1e-12));
        CHECK(d.class_probs[1] == doctest::Approx(0.75).epsilon(1e-12));
        CHECK(d.class_id == 1);
    }

    TEST_CASE("decode rejects malformed grids") {
        CHECK_THROWS_AS(decode_head(Tensor::from({2, 2, 3}, std::vector<double>(12, 0.0)),
                                    kAnchors, 0.5),
                        DimensionError);
        CHECK_THROWS_AS(
            decode_head(Tensor::from({2, 3, 3, 6}, std::vector<double>(108, 0.0)),
                        kAnchors, 0.5),
            DimensionError);
        CHECK_THROWS_AS(decode_head(Tensor::from({2, 2, 3, 4}, std::vector<double>(48, 0.0)),
                                    kAnchors, 0.5),
                        DimensionError);
    }

    TEST_CASE("iou fixtures") {
        Box a{1.0, 1.0, 2.0, 2.0};  // spans [0,2] x [0,2]
        Box b{2.0, 1.0, 2.0, 2.0};  // spans [1,3] x [0,2]
        CHECK(iou(a, b) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
        CHECK(iou(a, a) == 1.0);
        CHECK(iou(a, Box{5.0, 5.0, 1.0, 1.0}) == 0.0);
        CHECK(iou(a, Box{3.0, 1.0, 2.0, 2.0}) == 0.0);  // edge contact only
        Box inner{1.0, 1.0, 1.0, 1.0};
        CHECK(iou(a, inner) == doctest::Approx(0.25).epsilon(1e-15));
        CHECK(iou(Box{0, 0, 0, 0}, Box{0, 0, 0, 0}) == 0.0);  // empty union
    }

    TEST_CASE("iou is symmetric and bounded") {
        Rng rng(404);
        for (int i = 0; i < 200; ++i) {
            Box a{rng.uniform(), rng.uniform(), rng.uniform(0.01, 0.8),
                  rng.uniform(0.01, 0.8)};
            Box b{rng.uniform(), rng.uniform(), rng.uniform(0.01, 0.8),
                  rng.uniform(0.01, 0.8)};
            const double ab = iou(a, b);
            CHECK(ab == iou(b, a));
            CHECK(ab >= 0.0);
            CHECK(ab <= 1.0);
        }
    }

    TEST_CASE("nms keeps the best of an overlapping pair and distant boxes") {
        std::vector<Detection> dets = {
            det(0.30, 0.30, 0.20, 0.20, 0.8),   // loses to the next one
            det(0.31, 0.30, 0.20, 0.20, 0.9),
            det(0.80, 0.80, 0.10, 0.10, 0.7),   // far away, kept
        };
        std::vector<Detection> kept = nms(dets, 0.5);
        REQUIRE(kept.size() == 2);
        CHECK(kept[0].confidence == 0.9);
        CHECK(kept[1].confidence == 0.7);
    }

    TEST_CASE("nms threshold is inclusive") {
        Box a{0.3, 0.3, 0.2, 0.2};
        Box b{0.35, 0.3, 0.2, 0.2};
        const double overlap = iou(a, b);
        std::vector<Detection> dets = {det(0.3, 0.3, 0.2, 0.2, 0.9),
                                       det(0.35, 0.3, 0.2, 0.2, 0.8)};
        CHECK(nms(dets, overlap).size() == 1);           // iou == threshold drops
        CHECK(nms(dets, overlap + 1e-12).size() == 2);   // just above survives
    }

    TEST_CASE("nms output is confidence-sorted with stable ties") {
        std::vector<Detection> dets = {
            det(0.2, 0.2, 0.1, 0.1, 0.5),
            det(0.8, 0.8, 0.1, 0.1, 0.9),
            det(0.5, 0.5, 0.1, 0.1, 0.5),
        };
        std::vector<Detection> kept = nms(dets, 0.5);
        REQUIRE(kept.size() == 3);
        CHECK(kept[0].confidence == 0.9);
        // The two 0.5s keep their input order.
        CHECK(kept[1].box.x == 0.2);
        CHECK(kept[2].box.x == 0.5);
    }

    TEST_CASE("nms degenerate inputs") {
        CHECK(nms({}, 0.5).empty());
        std::vector<Detection> one = {det(0.5, 0.5, 0.2, 0.2, 0.3)};
        CHECK(nms(one, 0.5).size() == 1);
        // Threshold 0 with the inclusive rule keeps only the global best:
        // disjoint boxes still meet iou >= 0.
        std::vector<Detection> spread = {det(0.2, 0.2, 0.1, 0.1, 0.4),
                                         det(0.8, 0.8, 0.1, 0.1, 0.6)};
        CHECK(nms(spread, 0.0).size() == 1);
        CHECK(nms(spread, 0.0)[0].confidence == 0.6);
        CHECK_THROWS_AS(nms(spread, -0.1), ParameterError);
        CHECK_THROWS_AS(nms(spread, 1.5), ParameterError);
    }

    TEST_CASE("decoding a network head end to end") {
        // A forward pass's stride-32 head decodes without errors and every
        // detection lies in valid ranges.
        NetworkConfig cfg;
        cfg.input_size = 64;
        cfg.channel_mult = 0.125;
        ShapedNetModel model = build_network(cfg, 9);
        Rng rng(10);
        std::vector<double> v(static_cast<size_t>(1) * 3 * 64 * 64);
        for (double& x : v) x = rng.uniform();
        RawOutputs out = forward(model, Tensor::from({1, 3, 64, 64}, std::move(v)), false);
        const Tensor& h0 = out.heads[0];
        Tensor head0 = Tensor::from({h0.dim(1), h0.dim(2), h0.dim(3), h0.dim(4)}, h0.values());
        std::vector<Detection> dets = decode_head(head0, cfg.head_anchors(0), 0.0);
        CHECK(dets.size() == 2 * 2 * 3);
        for (const Detection& d : dets) {
            CHECK(d.box.x >= 0.0);
            CHECK(d.box.x <= 1.0);
            CHECK(d.box.y >= 0.0);
            CHECK(d.box.y <= 1.0);
            CHECK(d.box.w > 0.0);
            CHECK(d.confidence >= 0.0);
            CHECK(d.confidence <= 1.0);
        }
    }
}
