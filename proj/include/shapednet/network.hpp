#pragma once

#include <array>
#include <string>
#include <vector>

#include "shapednet/tensor.hpp"

namespace shapednet {

struct AnchorPair {
    double w = 0, h = 0;  // normalized units (fraction of image side)
};

struct NetworkConfig {
    int input_size = 416;       // square, multiple of 32
    double channel_mult = 1.0;  // scale on backbone widths (1 = full widths)
    int num_classes = 1;
    // 9 pairs ordered small to large; triples [0..2]/[3..5]/[6..8] belong to
    // the stride-8/16/32 heads respectively.
    std::vector<AnchorPair> anchors = default_anchors();
    bool regression_branch = true;
    double leaky_alpha = 0.1;
    double bn_eps = 1e-5;
    double bn_momentum = 0.1;
    double dropout_rate = 0.0;  // regression-branch dropout; off by default

    int det_features() const { return 5 + num_classes; }
    void validate() const;
    // Anchor triple feeding head h (0 = stride 32, 1 = 16, 2 = 8).
    std::array<AnchorPair, 3> head_anchors(int h) const;
    static std::vector<AnchorPair> default_anchors();
};

enum class LayerKind { Conv, Residual, Upsample, Concat };

struct LayerSpec {
    LayerKind kind = LayerKind::Conv;
    std::string name;   // convs: "convNN"; others: "residual"/"upsample"/"concat"
    int out_ch = 0;     // conv output channels (already width-scaled)
    int ksize = 0;      // conv kernel side; pad = ksize/2
    int stride = 1;
    bool bn = true;     // BN + leaky activation; false = linear conv + bias
    int from_a = -1;    // input layer index (-1 = previous layer)
    int from_b = -1;    // residual shortcut / concat second input
};

struct Topology {
    std::vector<LayerSpec> layers;
    std::array<int, 3> head_out{};  // detection conv indices, strides 32/16/8
    int regression_tap = -1;        // backbone terminus layer index
    int backbone_convs = 0;         // leading convs that form the backbone
};

// Darknet-53-style backbone (residual blocks 1,2,8,8,4) plus three
// upsample+concat detection heads; layer list is fully determined by config.
Topology build_topology(const NetworkConfig& cfg);

struct ConvParams {
    Tensor kernel;         // [Co,Ci,k,k]
    Tensor gamma, beta;    // BN layers only
    Tensor bias;           // linear layers only
    BatchNormStats stats;  // BN layers only
};

struct ShapedNetModel {
    NetworkConfig config;
    Topology topo;
    std::vector<ConvParams> convs;  // indexed by layer index; non-conv = empty
    Tensor bf_weight;               // [1, flatten_len] when regression_branch
    Tensor bf_bias;                 // [1]

    // Trainable tensors in fixed declaration order.
    std::vector<Tensor> parameters();
    std::vector<std::pair<std::string, Tensor>> named_parameters();
};

// Named view over everything a checkpoint stores: parameters plus BN running
// statistics. Pointers alias the model's buffers.
struct StateEntry {
    std::string name;
    Shape shape;
    std::vector<double>* data = nullptr;
};
std::vector<StateEntry> model_state(ShapedNetModel& model);

ShapedNetModel build_network(const NetworkConfig& cfg, uint64_t seed);

struct RawOutputs {
    // Per-slot detection maps [N,cs,cs,3,5+nc] at strides 32/16/8.
    std::array<Tensor, 3> heads;
    // [N] regression outputs; undefined when the branch is disabled.
    Tensor bf;
};

// images [N,3,S,S] with S = config.input_size, values in [0,1]. Training mode
// switches batch norm to batch statistics; `dropout_rng` is required only
// when config.dropout_rate > 0 and train is set.
RawOutputs forward(ShapedNetModel& model, const Tensor& images, bool train,
                   Rng* dropout_rng = nullptr);

struct ShapeRow {
    int index = 0;  // 1-based
    std::string desc;
    int c = 0, h = 0, w = 0;  // output shape
};

struct ShapeReport {
    std::vector<ShapeRow> rows;
    int regression_c = 0, regression_h = 0, regression_w = 0;
    int64_t flatten_len = 0;
    std::array<int, 3> head_grids{};
    std::string to_string() const;
};

// Analytic per-layer shapes; never allocates tensors.
ShapeReport shape_report(const NetworkConfig& cfg);

}  // namespace shapednet
