#include "shapednet/network.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

#include "shapednet/training.hpp"

namespace shapednet {

std::vector<AnchorPair> NetworkConfig::default_anchors() {
    // The reference detector's nine pixel anchors at a 416 input, rescaled to
    // normalized units; ordered small to large.
    const double px[9][2] = {{10, 13},  {16, 30},   {33, 23},   {30, 61},  {62, 45},
                             {59, 119}, {116, 90}, {156, 198}, {373, 326}};
    std::vector<AnchorPair> out(9);
    for (int i = 0; i < 9; ++i) out[static_cast<size_t>(i)] = {px[i][0] / 416.0, px[i][1] / 416.0};
    return out;
}

void NetworkConfig::validate() const {
    if (input_size <= 0 || input_size % 32 != 0)
        throw ConfigError("input_size must be a positive multiple of 32, got " +
                          std::to_string(input_size));
    if (channel_mult <= 0.0)
        throw ConfigError("channel_mult must be > 0");
    if (num_classes < 1) throw ConfigError("num_classes must be >= 1");
    if (anchors.size() != 9)
        throw ConfigError("expected exactly 9 anchors, got " + std::to_string(anchors.size()));
    for (const AnchorPair& a : anchors)
        if (a.w <= 0.0 || a.h <= 0.0) throw ConfigError("anchors must have positive extents");
    if (leaky_alpha < 0.0 || leaky_alpha >= 1.0) throw ConfigError("leaky_alpha must be in [0,1)");
    if (bn_eps <= 0.0) throw ConfigError("bn_eps must be > 0");
    if (bn_momentum <= 0.0 || bn_momentum > 1.0) throw ConfigError("bn_momentum must be in (0,1]");
    if (dropout_rate < 0.0 || dropout_rate >= 1.0) throw ConfigError("dropout_rate must be in [0,1)");
}

std::array<AnchorPair, 3> NetworkConfig::head_anchors(int h) const {
    if (h < 0 || h > 2) throw ParameterError("head index must be 0..2");
    // head 0 runs at stride 32 and owns the largest triple
    const int base = (2 - h) * 3;
    return {anchors[static_cast<size_t>(base)], anchors[static_cast<size_t>(base + 1)],
            anchors[static_cast<size_t>(base + 2)]};
}

namespace {

int scaled_width(int base, double mult) {
    return std::max(1, static_cast<int>(std::llround(base * mult)));
}

}  // namespace

Topology build_topology(const NetworkConfig& cfg) {
    cfg.validate();
    Topology t;
    int conv_no = 0;
    auto add_conv = [&](int ch, int k, int stride, bool bn = true, int from = -1) {
        LayerSpec s;
        s.kind = LayerKind::Conv;
        char buf[16];
        std::snprintf(buf, sizeof buf, "conv%02d", ++conv_no);
        s.name = buf;
        s.out_ch = ch;
        s.ksize = k;
        s.stride = stride;
        s.bn = bn;
        s.from_a = from;
        t.layers.push_back(s);
        return static_cast<int>(t.layers.size()) - 1;
    };
    auto add_res = [&](int shortcut) {
        LayerSpec s;
        s.kind = LayerKind::Residual;
        s.name = "residual";
        s.from_b = shortcut;
        t.layers.push_back(s);
        return static_cast<int>(t.layers.size()) - 1;
    };
    auto add_upsample = [&]() {
        LayerSpec s;
        s.kind = LayerKind::Upsample;
        s.name = "upsample";
        t.layers.push_back(s);
        return static_cast<int>(t.layers.size()) - 1;
    };
    auto add_concat = [&](int other) {
        LayerSpec s;
        s.kind = LayerKind::Concat;
        s.name = "concat";
        s.from_b = other;
        t.layers.push_back(s);
        return static_cast<int>(t.layers.size()) - 1;
    };

    const double m = cfg.channel_mult;
    // Backbone: stem conv + five stages with (1,2,8,8,4) residual blocks.
    add_conv(scaled_width(32, m), 3, 1);
    const int stage_width[5] = {64, 128, 256, 512, 1024};
    const int stage_blocks[5] = {1, 2, 8, 8, 4};
    int tap8 = -1, tap16 = -1;
    for (int stage = 0; stage < 5; ++stage) {
        add_conv(scaled_width(stage_width[stage], m), 3, 2);
        for (int b = 0; b < stage_blocks[stage]; ++b) {
            const int block_in = static_cast<int>(t.layers.size()) - 1;
            add_conv(scaled_width(stage_width[stage] / 2, m), 1, 1);
            add_conv(scaled_width(stage_width[stage], m), 3, 1);
            add_res(block_in);
        }
        if (stage == 2) tap8 = static_cast<int>(t.layers.size()) - 1;
        if (stage == 3) tap16 = static_cast<int>(t.layers.size()) - 1;
    }
    t.regression_tap = static_cast<int>(t.layers.size()) - 1;
    t.backbone_convs = conv_no;

    const int det_ch = 3 * cfg.det_features();
    auto add_stack = [&](int narrow, int wide) {
        int r = -1;
        for (int i = 0; i < 5; ++i)
            r = add_conv(scaled_width(i % 2 == 0 ? narrow : wide, m), i % 2 == 0 ? 1 : 3, 1);
        return r;
    };
    // Head at stride 32.
    int route = add_stack(512, 1024);
    add_conv(scaled_width(1024, m), 3, 1);
    t.head_out[0] = add_conv(det_ch, 1, 1, /*bn=*/false);
    // Stride 16: narrow the route, upsample, merge with the 512-wide tap.
    add_conv(scaled_width(256, m), 1, 1, true, route);
    add_upsample();
    add_concat(tap16);
    route = add_stack(256, 512);
    add_conv(scaled_width(512, m), 3, 1);
    t.head_out[1] = add_conv(det_ch, 1, 1, false);
    // Stride 8: same pattern against the 256-wide tap.
    add_conv(scaled_width(128, m), 1, 1, true, route);
    add_upsample();
    add_concat(tap8);
    add_stack(128, 256);
    add_conv(scaled_width(256, m), 3, 1);
    t.head_out[2] = add_conv(det_ch, 1, 1, false);
    return t;
}

ShapeReport shape_report(const NetworkConfig& cfg) {
    Topology topo = build_topology(cfg);
    ShapeReport rep;
    std::vector<std::array<int, 3>> shapes(topo.layers.size());
    auto input_of = [&](int i, int from) -> std::array<int, 3> {
        if (from >= 0) return shapes[static_cast<size_t>(from)];
        if (i == 0) return {3, cfg.input_size, cfg.input_size};
        return shapes[static_cast<size_t>(i) - 1];
    };
    for (size_t i = 0; i < topo.layers.size(); ++i) {
        const LayerSpec& s = topo.layers[i];
        std::array<int, 3> a = input_of(static_cast<int>(i), s.from_a);
        std::array<int, 3> out{};
        std::string desc;
        switch (s.kind) {
            case LayerKind::Conv: {
                const int pad = s.ksize / 2;
                out = {s.out_ch, (a[1] + 2 * pad - s.ksize) / s.stride + 1,
                       (a[2] + 2 * pad - s.ksize) / s.stride + 1};
                char buf[40];
                std::snprintf(buf, sizeof buf, "conv %dx%d/%d%s", s.ksize, s.ksize, s.stride,
                              s.bn ? "" : " linear");
                desc = buf;
                break;
            }
            case LayerKind::Residual:
                out = a;
                desc = "residual";
                break;
            case LayerKind::Upsample:
                out = {a[0], 2 * a[1], 2 * a[2]};
                desc = "upsample";
                break;
            case LayerKind::Concat: {
                std::array<int, 3> b = shapes[static_cast<size_t>(s.from_b)];
                out = {a[0] + b[0], a[1], a[2]};
                desc = "concat";
                break;
            }
        }
        shapes[i] = out;
        rep.rows.push_back({static_cast<int>(i) + 1, desc, out[0], out[1], out[2]});
    }
    const auto& term = shapes[static_cast<size_t>(topo.regression_tap)];
    rep.regression_c = term[0];
    rep.regression_h = term[1];
    rep.regression_w = term[2];
    rep.flatten_len = static_cast<int64_t>(term[0]) * term[1] * term[2];
    for (int h = 0; h < 3; ++h)
        rep.head_grids[static_cast<size_t>(h)] = shapes[static_cast<size_t>(topo.head_out[static_cast<size_t>(h)])][1];
    return rep;
}

std::string ShapeReport::to_string() const {
    std::ostringstream os;
    os << " idx  layer              output\n";
    for (const ShapeRow& r : rows) {
        char buf[80];
        std::snprintf(buf, sizeof buf, "%4d  %-17s  %dx%dx%d\n", r.index, r.desc.c_str(), r.c,
                      r.h, r.w);
        os << buf;
    }
    os << "regression input: " << regression_c << "x" << regression_h << "x" << regression_w
       << "\n";
    os << "flatten: " << flatten_len << "\n";
    os << "head grids: " << head_grids[0] << " " << head_grids[1] << " " << head_grids[2] << "\n";
    return os.str();
}

ShapedNetModel build_network(const NetworkConfig& cfg, uint64_t seed) {
    ShapedNetModel model;
    model.config = cfg;
    model.topo = build_topology(cfg);
    ShapeReport rep = shape_report(cfg);
    model.convs.resize(model.topo.layers.size());
    for (size_t i = 0; i < model.topo.layers.size(); ++i) {
        const LayerSpec& s = model.topo.layers[i];
        if (s.kind != LayerKind::Conv) continue;
        int ci;
        if (s.from_a >= 0)
            ci = rep.rows[static_cast<size_t>(s.from_a)].c;
        else if (i == 0)
            ci = 3;
        else
            ci = rep.rows[i - 1].c;
        ConvParams& p = model.convs[i];
        p.kernel = init_glorot({s.out_ch, ci, s.ksize, s.ksize},
                               Rng::derive(seed, Rng::hash_name((s.name + "/kernel").c_str())));
        if (s.bn) {
            p.gamma = Tensor::param({s.out_ch}, std::vector<double>(static_cast<size_t>(s.out_ch), 1.0));
            p.beta = Tensor::param({s.out_ch}, std::vector<double>(static_cast<size_t>(s.out_ch), 0.0));
            p.stats.init(s.out_ch);
        } else {
            p.bias = Tensor::param({s.out_ch}, std::vector<double>(static_cast<size_t>(s.out_ch), 0.0));
        }
    }
    if (cfg.regression_branch) {
        model.bf_weight = init_glorot({1, static_cast<int>(rep.flatten_len)},
                                      Rng::derive(seed, Rng::hash_name("bf/weight")));
        model.bf_bias = Tensor::param({1}, {0.0});
    }
    return model;
}

std::vector<Tensor> ShapedNetModel::parameters() {
    std::vector<Tensor> out;
    for (size_t i = 0; i < topo.layers.size(); ++i) {
        if (topo.layers[i].kind != LayerKind::Conv) continue;
        ConvParams& p = convs[i];
        out.push_back(p.kernel);
        if (topo.layers[i].bn) {
            out.push_back(p.gamma);
            out.push_back(p.beta);
        } else {
            out.push_back(p.bias);
        }
    }
    if (config.regression_branch) {
        out.push_back(bf_weight);
        out.push_back(bf_bias);
    }
    return out;
}

std::vector<std::pair<std::string, Tensor>> ShapedNetModel::named_parameters() {
    std::vector<std::pair<std::string, Tensor>> out;
    for (size_t i = 0; i < topo.layers.size(); ++i) {
        if (topo.layers[i].kind != LayerKind::Conv) continue;
        const std::string& n = topo.layers[i].name;
        ConvParams& p = convs[i];
        out.emplace_back(n + "/kernel", p.kernel);
        if (topo.layers[i].bn) {
            out.emplace_back(n + "/gamma", p.gamma);
            out.emplace_back(n + "/beta", p.beta);
        } else {
            out.emplace_back(n + "/bias", p.bias);
        }
    }
    if (config.regression_branch) {
        out.emplace_back("bf/weight", bf_weight);
        out.emplace_back("bf/bias", bf_bias);
    }
    return out;
}

std::vector<StateEntry> model_state(ShapedNetModel& model) {
    std::vector<StateEntry> out;
    for (size_t i = 0; i < model.topo.layers.size(); ++i) {
        if (model.topo.layers[i].kind != LayerKind::Conv) continue;
        const LayerSpec& s = model.topo.layers[i];
        ConvParams& p = model.convs[i];
        out.push_back({s.name + "/kernel", p.kernel.shape(), &p.kernel.mutable_values()});
        if (s.bn) {
            out.push_back({s.name + "/gamma", p.gamma.shape(), &p.gamma.mutable_values()});
            out.push_back({s.name + "/beta", p.beta.shape(), &p.beta.mutable_values()});
            out.push_back({s.name + "/running_mean", {s.out_ch}, &p.stats.running_mean});
            out.push_back({s.name + "/running_var", {s.out_ch}, &p.stats.running_var});
        } else {
            out.push_back({s.name + "/bias", p.bias.shape(), &p.bias.mutable_values()});
        }
    }
    if (model.config.regression_branch) {
        out.push_back({"bf/weight", model.bf_weight.shape(), &model.bf_weight.mutable_values()});
        out.push_back({"bf/bias", model.bf_bias.shape(), &model.bf_bias.mutable_values()});
    }
    return out;
}

RawOutputs forward(ShapedNetModel& model, const Tensor& images, bool train, Rng* dropout_rng) {
    const NetworkConfig& cfg = model.config;
    if (images.rank() != 4 || images.dim(1) != 3 || images.dim(2) != cfg.input_size ||
        images.dim(3) != cfg.input_size)
        throw DimensionError("forward: expected images [N,3," + std::to_string(cfg.input_size) +
                             "," + std::to_string(cfg.input_size) + "], got " +
                             shape_str(images.shape()));
    const int N = images.dim(0);
    std::vector<Tensor> outs(model.topo.layers.size());
    for (size_t i = 0; i < model.topo.layers.size(); ++i) {
        const LayerSpec& s = model.topo.layers[i];
        Tensor a = s.from_a >= 0 ? outs[static_cast<size_t>(s.from_a)]
                                 : (i == 0 ? images : outs[i - 1]);
        Tensor o;
        switch (s.kind) {
            case LayerKind::Conv: {
                ConvParams& p = model.convs[i];
                o = conv2d(a, p.kernel, s.stride, s.ksize / 2);
                if (s.bn)
                    o = leaky_relu(batch_norm(o, p.gamma, p.beta, cfg.bn_eps, train, p.stats,
                                              cfg.bn_momentum),
                                   cfg.leaky_alpha);
                else
                    o = add_channel_bias(o, p.bias);
                break;
            }
            case LayerKind::Residual:
                o = residual_add(outs[i - 1], outs[static_cast<size_t>(s.from_b)]);
                break;
            case LayerKind::Upsample:
                o = upsample_nearest2x(a);
                break;
            case LayerKind::Concat:
                o = concat_channels(a, outs[static_cast<size_t>(s.from_b)]);
                break;
        }
        outs[i] = o;
    }
    RawOutputs ro;
    for (int h = 0; h < 3; ++h)
        ro.heads[static_cast<size_t>(h)] =
            to_grid_layout(outs[static_cast<size_t>(model.topo.head_out[static_cast<size_t>(h)])],
                           3, cfg.det_features());
    if (cfg.regression_branch) {
        Tensor terminus = outs[static_cast<size_t>(model.topo.regression_tap)];
        std::vector<Tensor> per_image;
        per_image.reserve(static_cast<size_t>(N));
        for (int n = 0; n < N; ++n) {
            Tensor x = flatten(select_image(terminus, n));
            if (cfg.dropout_rate > 0.0 && train) {
                if (!dropout_rng)
                    throw ParameterError("forward: dropout enabled but no rng supplied");
                x = dropout(x, cfg.dropout_rate, train, *dropout_rng);
            }
            per_image.push_back(dense(x, model.bf_weight, model.bf_bias));
        }
        ro.bf = stack_scalars(per_image);
    }
    auto all_finite = [](const Tensor& t) {
        for (double v : t.values())
            if (!std::isfinite(v)) return false;
        return true;
    };
    for (int h = 0; h < 3; ++h)
        if (!all_finite(ro.heads[static_cast<size_t>(h)]))
            throw EvalError("forward produced non-finite values in head " + std::to_string(h));
    if (ro.bf.defined() && !all_finite(ro.bf))
        throw EvalError("forward produced non-finite regression output");
    return ro;
}

}  // namespace shapednet
