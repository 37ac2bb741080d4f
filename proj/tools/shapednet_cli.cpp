// ShapedNet command-line tool: synthetic data generation, architecture shape
// inspection, training, evaluation, single-image inference, and Tukey-based
// model comparison.
//
// Configuration precedence: built-in defaults < --config file (flat
// "key = value" text) < explicit flags. Unknown keys are rejected. The fully
// resolved configuration is logged to stderr for every run; stdout carries
// only data so identical inputs and seeds reproduce identical bytes.

#include <array>
#include <cstdio>
#include <cstdlib>
#include <iostream>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "CLI11.hpp"
#include "shapednet/checkpoint.hpp"
#include "shapednet/config.hpp"
#include "shapednet/data.hpp"
#include "shapednet/evaluate.hpp"
#include "shapednet/format.hpp"
#include "shapednet/network.hpp"
#include "shapednet/training.hpp"

using namespace shapednet;

namespace {

// One subcommand's flag set. Every flag doubles as a config-file key; flags
// given on the command line override the file, and remaining keys fall back
// to the documented defaults so the resolved log always shows every value.
struct SubOpts {
    CLI::App* sc = nullptr;
    std::string config_path;
    std::map<std::string, std::string> raw;
    std::vector<std::pair<std::string, CLI::Option*>> opts;
    std::vector<std::string> known;
    std::map<std::string, std::string> defaults;

    explicit SubOpts(CLI::App* sub) : sc(sub) {
        sc->add_option("--config", config_path, "flat key = value config file");
    }

    void add(const std::string& flag, const std::string& key, const std::string& def,
             const std::string& help) {
        std::string text = help;
        if (!def.empty()) text += " [" + def + "]";
        opts.emplace_back(key, sc->add_option(flag, raw[key], text));
        known.push_back(key);
        defaults[key] = def;
    }

    KvConfig resolve() const {
        KvConfig cfg =
            config_path.empty() ? KvConfig{} : KvConfig::parse_file(config_path);
        for (const auto& [key, opt] : opts)
            if (opt->count() > 0) cfg.set(key, raw.at(key));
        cfg.check_known(known);
        for (const std::string& key : known)
            if (!cfg.has(key)) cfg.set(key, defaults.at(key));
        return cfg;
    }
};

// Global seed fallback: explicit key wins, then SHAPEDNET_SEED, then 0.
void apply_seed_fallback(KvConfig& cfg) {
    if (!cfg.has("seed") || cfg.get_string("seed", "").empty()) {
        const char* env = std::getenv("SHAPEDNET_SEED");
        cfg.set("seed", (env && *env) ? env : "0");
    }
    if (cfg.get_int("seed", 0) < 0) throw ConfigError("seed must be >= 0");
}

void require_keys(const KvConfig& cfg, const std::vector<std::string>& keys) {
    for (const std::string& k : keys)
        if (cfg.get_string(k, "").empty())
            throw ConfigError("missing required option '--" + k + "' (config key '" + k +
                              "')");
}

void log_resolved(const char* cmd, const KvConfig& cfg,
                  const std::vector<std::string>& order) {
    std::cerr << "# resolved config (" << cmd << ")\n";
    for (const std::string& key : order) {
        const auto v = cfg.find(key);
        std::cerr << key << " = " << (v ? *v : "") << "\n";
    }
}

NetworkConfig net_from(const KvConfig& cfg) {
    NetworkConfig nc;
    nc.input_size = static_cast<int>(cfg.get_int("input", 64));
    nc.channel_mult = cfg.get_double("mult", 0.125);
    nc.num_classes = static_cast<int>(cfg.get_int("classes", 1));
    nc.dropout_rate = cfg.get_double("dropout", 0.0);
    nc.validate();
    return nc;
}

BfLossMode parse_bf_mode(const std::string& s) {
    if (s == "signed") return BfLossMode::Signed;
    if (s == "absolute") return BfLossMode::Absolute;
    if (s == "squared") return BfLossMode::Squared;
    throw ConfigError("bf_mode must be signed|absolute|squared, got '" + s + "'");
}

std::vector<SampleRecord> records_for_split(const std::string& data_dir,
                                            const std::string& split_name) {
    std::vector<SampleRecord> all = load_manifest(data_dir + "/manifest.txt");
    const Split want = parse_split(split_name);
    std::vector<SampleRecord> out;
    for (const SampleRecord& r : all)
        if (r.split == want) out.push_back(r);
    if (out.empty())
        throw DataError("no records with split '" + split_name + "' in " + data_dir);
    return out;
}

std::string fmt2(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

std::string fmt_p(double p) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3f", std::max(p, 0.001));
    std::string s = buf;
    if (s.rfind("0.", 0) == 0) s = s.substr(1);
    return s;
}

struct DetectionSummary {
    int n = 0, detected = 0, ge_half = 0;
    double mean_iou = 0;  // over detected subjects
    double frac_ge_half = 0;  // misses count against the fraction
};

DetectionSummary summarize_detections(const std::vector<SubjectResult>& rs) {
    DetectionSummary s;
    s.n = static_cast<int>(rs.size());
    double iou_sum = 0.0;
    for (const SubjectResult& r : rs) {
        if (!r.detected) continue;
        ++s.detected;
        iou_sum += r.iou_vs_truth;
        if (r.iou_vs_truth >= 0.5) ++s.ge_half;
    }
    if (s.detected > 0) s.mean_iou = iou_sum / s.detected;
    if (s.n > 0) s.frac_ge_half = static_cast<double>(s.ge_half) / s.n;
    return s;
}

int cmd_gen_data(const KvConfig& cfg) {
    SyntheticSpec spec;
    spec.count = static_cast<int>(cfg.get_int("count", 280));
    spec.image_size = static_cast<int>(cfg.get_int("image_size", 64));
    spec.fat_lo = cfg.get_double("fat_lo", 0.0);
    spec.fat_hi = cfg.get_double("fat_hi", 1.0);
    spec.sex_ratio = cfg.get_double("sex_ratio", 0.5);
    spec.seed = static_cast<uint64_t>(cfg.get_int("seed", 0));
    const std::string out = cfg.get_string("out", "");
    const double tr = cfg.get_double("train_ratio", 0.8);
    const double vr = cfg.get_double("val_ratio", 0.1);
    const double te = cfg.get_double("test_ratio", 0.1);

    std::vector<SampleRecord> records = generate_synthetic_dataset(spec, out);
    stratified_split(records, tr, vr, te, spec.seed);
    save_manifest(out + "/manifest.txt", records);

    std::array<int, 6> strata{};
    std::array<int, 3> splits{};
    for (const SampleRecord& r : records) {
        ++strata[static_cast<size_t>(bmi_category(r.bmi()) - 1)];
        if (r.split == Split::Train) ++splits[0];
        if (r.split == Split::Val) ++splits[1];
        if (r.split == Split::Test) ++splits[2];
    }
    std::cout << "generated=" << records.size() << " dir=" << out << "\n";
    for (size_t i = 0; i < strata.size(); ++i)
        std::cout << "stratum=" << i + 1 << " n=" << strata[i] << "\n";
    std::cout << "split train=" << splits[0] << " val=" << splits[1] << " test=" << splits[2]
              << "\n";
    return 0;
}

int cmd_shapes(const KvConfig& cfg) {
    NetworkConfig nc;
    nc.input_size = static_cast<int>(cfg.get_int("input", 416));
    nc.channel_mult = cfg.get_double("mult", 1.0);
    nc.num_classes = static_cast<int>(cfg.get_int("classes", 1));
    nc.validate();
    std::cout << shape_report(nc).to_string();
    return 0;
}

int cmd_train(const KvConfig& cfg) {
    const std::string data = cfg.get_string("data", "");
    const std::string out = cfg.get_string("out", "");
    TrainConfig tc;
    tc.epochs = static_cast<int>(cfg.get_int("epochs", 60));
    tc.warmup_epochs = static_cast<int>(cfg.get_int("warmup_epochs", 2));
    tc.lr_init = cfg.get_double("lr_init", 1e-4);
    tc.lr_min = cfg.get_double("lr_min", 0.0);
    tc.batch_size = static_cast<int>(cfg.get_int("batch_size", 8));
    tc.beta1 = cfg.get_double("beta1", 0.9);
    tc.beta2 = cfg.get_double("beta2", 0.999);
    tc.adam_eps = cfg.get_double("adam_eps", 1e-8);
    tc.seed = static_cast<uint64_t>(cfg.get_int("seed", 0));
    tc.bf_loss_mode = parse_bf_mode(cfg.get_string("bf_mode", "absolute"));
    tc.weights.lambda_coord = cfg.get_double("lambda_coord", 5.0);
    tc.weights.lambda_noobj = cfg.get_double("lambda_noobj", 0.5);
    tc.weights.lambda_f = cfg.get_double("lambda_f", 1.0);
    tc.grad_clip = cfg.get_double("grad_clip", 0.0);
    tc.bf_bias_init_mean = cfg.get_bool("bf_bias_init_mean", true);
    tc.hflip = cfg.get_bool("hflip", false);
    tc.validate();

    std::vector<SampleRecord> all = load_manifest(data + "/manifest.txt");
    std::vector<SampleRecord> train_set, val_set;
    for (const SampleRecord& r : all) {
        if (r.split == Split::Train) train_set.push_back(r);
        if (r.split == Split::Val) val_set.push_back(r);
    }
    ShapedNetModel model = build_network(net_from(cfg), tc.seed);
    const std::string pretrained = cfg.get_string("pretrained", "");
    if (!pretrained.empty()) load_pretrained_backbone(model, pretrained);

    TrainResult res = train(model, train_set, val_set, data, tc, out);
    std::cout << res.log.serialize();
    std::cout << "checkpoint=" << res.best_checkpoint_path << "\n";
    return 0;
}

int cmd_eval(const KvConfig& cfg) {
    const std::string data = cfg.get_string("data", "");
    const std::string model_path = cfg.get_string("model", "");
    const std::string split = cfg.get_string("split", "test");
    const double conf = cfg.get_double("conf", 0.25);
    const double nms_thr = cfg.get_double("nms", 0.45);

    std::vector<SampleRecord> subset = records_for_split(data, split);
    ShapedNetModel model = build_network(net_from(cfg), 0);
    load_checkpoint(model_path, model);
    std::vector<SubjectResult> results = run_inference(model, subset, data, conf, nms_thr);
    EvalReport rep = evaluate_results(results, split);
    DetectionSummary det = summarize_detections(results);

    std::cout << rep.render_table();
    std::cout << "detection: n=" << det.n << " detected=" << det.detected
              << " mean_iou=" << fmt2(det.mean_iou) << " iou>=0.5 on "
              << fmt2(100.0 * det.frac_ge_half) << "% of images\n";
    std::cout << rep.render_machine();
    std::cout << "detect split=" << split << " n=" << det.n << " detected=" << det.detected
              << " mean_iou=" << format_double(det.mean_iou)
              << " iou_ge_half=" << format_double(det.frac_ge_half) << "\n";
    return 0;
}

int cmd_infer(const KvConfig& cfg, const std::vector<std::string>& images) {
    const std::string model_path = cfg.get_string("model", "");
    const double conf = cfg.get_double("conf", 0.25);
    const double nms_thr = cfg.get_double("nms", 0.45);
    NetworkConfig nc = net_from(cfg);
    ShapedNetModel model = build_network(nc, 0);
    load_checkpoint(model_path, model);

    NoGradGuard guard;
    for (const std::string& path : images) {
        GrayImage img = read_png_gray(path);
        if (img.width != nc.input_size || img.height != nc.input_size)
            throw DimensionError("image " + path + " is " + std::to_string(img.width) + "x" +
                                 std::to_string(img.height) + ", expected " +
                                 std::to_string(nc.input_size) + "x" +
                                 std::to_string(nc.input_size));
        Tensor im = Tensor::from({1, 3, nc.input_size, nc.input_size}, image_to_channels(img));
        RawOutputs out = forward(model, im, false);
        std::vector<Detection> dets;
        for (int h = 0; h < 3; ++h) {
            const Tensor& head = out.heads[static_cast<size_t>(h)];
            Tensor grid = Tensor::from({head.dim(1), head.dim(2), head.dim(3), head.dim(4)},
                                       head.values());
            std::vector<Detection> d = decode_head(grid, nc.head_anchors(h), conf);
            dets.insert(dets.end(), d.begin(), d.end());
        }
        std::vector<Detection> kept = nms(dets, nms_thr);
        std::cout << "image=" << path;
        if (nc.regression_branch) std::cout << " bfp=" << format_double(out.bf.values()[0]);
        if (kept.empty()) {
            std::cout << " detections=0\n";
            continue;
        }
        const Detection& d = kept[0];
        std::cout << " x=" << format_double(d.box.x) << " y=" << format_double(d.box.y)
                  << " w=" << format_double(d.box.w) << " h=" << format_double(d.box.h)
                  << " confidence=" << format_double(d.confidence) << " class=" << d.class_id
                  << "\n";
    }
    return 0;
}

int cmd_compare(const KvConfig& cfg, const std::vector<std::string>& model_args) {
    if (model_args.size() < 2)
        throw ConfigError("compare needs at least two --model name=path arguments");
    const std::string data = cfg.get_string("data", "");
    const std::string split = cfg.get_string("split", "test");
    const double conf = cfg.get_double("conf", 0.25);
    const double nms_thr = cfg.get_double("nms", 0.45);
    const double alpha = cfg.get_double("alpha", 0.05);

    std::vector<SampleRecord> subset = records_for_split(data, split);
    std::vector<std::pair<std::string, std::vector<SubjectResult>>> variants;
    for (const std::string& arg : model_args) {
        const size_t eq = arg.find('=');
        if (eq == std::string::npos || eq == 0 || eq + 1 == arg.size())
            throw ConfigError("--model expects name=path, got '" + arg + "'");
        const std::string name = arg.substr(0, eq);
        const std::string path = arg.substr(eq + 1);
        ShapedNetModel model = build_network(net_from(cfg), 0);
        load_checkpoint(path, model);
        variants.emplace_back(name, run_inference(model, subset, data, conf, nms_thr));
    }
    std::vector<TukeyPair> pairs = compare_variants(variants, alpha);

    std::cout << "Tukey HSD on absolute errors (split=" << split
              << ", alpha=" << format_double(alpha) << "):\n";
    for (const TukeyPair& t : pairs)
        std::cout << "  " << t.group_a << " vs " << t.group_b << ": MD=" << fmt2(t.md)
                  << " p=" << fmt_p(t.p) << (t.reject ? " (significant)" : " (n.s.)")
                  << "\n";
    for (const TukeyPair& t : pairs)
        std::cout << "tukey a=" << t.group_a << " b=" << t.group_b
                  << " md=" << format_double(t.md) << " p=" << format_double(t.p)
                  << " reject=" << (t.reject ? 1 : 0) << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"ShapedNet: silhouette person detection and body-fat regression toolkit"};
    app.require_subcommand(1);

    SubOpts gen(app.add_subcommand("gen-data",
                                   "generate a synthetic silhouette dataset with manifest"));
    gen.add("--out", "out", "", "output directory (required)");
    gen.add("--count", "count", "280", "number of samples");
    gen.add("--image-size", "image_size", "64", "square image side in pixels");
    gen.add("--fat-lo", "fat_lo", "0", "low end of the fatness range [0,1]");
    gen.add("--fat-hi", "fat_hi", "1", "high end of the fatness range [0,1]");
    gen.add("--sex-ratio", "sex_ratio", "0.5", "fraction of female subjects");
    gen.add("--train-ratio", "train_ratio", "0.8", "train split fraction");
    gen.add("--val-ratio", "val_ratio", "0.1", "validation split fraction");
    gen.add("--test-ratio", "test_ratio", "0.1", "test split fraction");
    gen.add("--seed", "seed", "", "RNG seed (falls back to $SHAPEDNET_SEED, then 0)");

    SubOpts shp(app.add_subcommand("shapes", "print per-layer output shapes for a config"));
    shp.add("--input", "input", "416", "input image side (multiple of 32)");
    shp.add("--mult", "mult", "1", "channel width multiplier");
    shp.add("--classes", "classes", "1", "number of detection classes");

    SubOpts trn(app.add_subcommand("train", "train a model on a generated dataset"));
    trn.add("--data", "data", "", "dataset directory with manifest.txt (required)");
    trn.add("--out", "out", "", "output directory for checkpoint + log (required)");
    trn.add("--input", "input", "64", "input image side (multiple of 32)");
    trn.add("--mult", "mult", "0.125", "channel width multiplier");
    trn.add("--classes", "classes", "1", "number of detection classes");
    trn.add("--dropout", "dropout", "0", "regression-branch dropout rate");
    trn.add("--epochs", "epochs", "60", "training epochs");
    trn.add("--warmup-epochs", "warmup_epochs", "2", "linear warmup epochs");
    trn.add("--lr-init", "lr_init", "0.0001", "peak learning rate");
    trn.add("--lr-min", "lr_min", "0", "cosine floor learning rate");
    trn.add("--batch-size", "batch_size", "8", "mini-batch size");
    trn.add("--beta1", "beta1", "0.9", "Adam beta1");
    trn.add("--beta2", "beta2", "0.999", "Adam beta2");
    trn.add("--adam-eps", "adam_eps", "1e-08", "Adam epsilon");
    trn.add("--bf-mode", "bf_mode", "absolute", "body-fat loss: signed|absolute|squared");
    trn.add("--lambda-coord", "lambda_coord", "5", "box coordinate loss weight");
    trn.add("--lambda-noobj", "lambda_noobj", "0.5", "no-object confidence loss weight");
    trn.add("--lambda-f", "lambda_f", "1", "body-fat loss weight");
    trn.add("--grad-clip", "grad_clip", "0", "global gradient-norm clip (0 = off)");
    trn.add("--bf-bias-init-mean", "bf_bias_init_mean", "true",
            "start the regression bias at the train-set mean (true|false)");
    trn.add("--hflip", "hflip", "false", "random horizontal flip augmentation (true|false)");
    trn.add("--pretrained", "pretrained", "", "checkpoint to warm-start the backbone from");
    trn.add("--seed", "seed", "", "RNG seed (falls back to $SHAPEDNET_SEED, then 0)");

    SubOpts evl(app.add_subcommand("eval", "evaluate a checkpoint on one manifest split"));
    evl.add("--data", "data", "", "dataset directory with manifest.txt (required)");
    evl.add("--model", "model", "", "checkpoint file (required)");
    evl.add("--split", "split", "test", "manifest split: train|val|test");
    evl.add("--input", "input", "64", "input image side (multiple of 32)");
    evl.add("--mult", "mult", "0.125", "channel width multiplier");
    evl.add("--classes", "classes", "1", "number of detection classes");
    evl.add("--conf", "conf", "0.25", "confidence threshold");
    evl.add("--nms", "nms", "0.45", "NMS IoU threshold");

    SubOpts inf(app.add_subcommand("infer", "run one checkpoint over individual images"));
    std::vector<std::string> infer_images;
    inf.sc->add_option("images", infer_images, "input PNG files")->required();
    inf.add("--model", "model", "", "checkpoint file (required)");
    inf.add("--input", "input", "64", "input image side (multiple of 32)");
    inf.add("--mult", "mult", "0.125", "channel width multiplier");
    inf.add("--classes", "classes", "1", "number of detection classes");
    inf.add("--conf", "conf", "0.25", "confidence threshold");
    inf.add("--nms", "nms", "0.45", "NMS IoU threshold");

    SubOpts cmp(app.add_subcommand("compare",
                                   "Tukey HSD across two or more checkpoints' errors"));
    std::vector<std::string> compare_models;
    cmp.sc->add_option("--model", compare_models, "variant as name=path (repeat >= 2)");
    cmp.add("--data", "data", "", "dataset directory with manifest.txt (required)");
    cmp.add("--split", "split", "test", "manifest split: train|val|test");
    cmp.add("--input", "input", "64", "input image side (multiple of 32)");
    cmp.add("--mult", "mult", "0.125", "channel width multiplier");
    cmp.add("--classes", "classes", "1", "number of detection classes");
    cmp.add("--conf", "conf", "0.25", "confidence threshold");
    cmp.add("--nms", "nms", "0.45", "NMS IoU threshold");
    cmp.add("--alpha", "alpha", "0.05", "significance level");

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen.sc->parsed()) {
            KvConfig cfg = gen.resolve();
            apply_seed_fallback(cfg);
            require_keys(cfg, {"out"});
            log_resolved("gen-data", cfg, gen.known);
            return cmd_gen_data(cfg);
        }
        if (shp.sc->parsed()) {
            KvConfig cfg = shp.resolve();
            log_resolved("shapes", cfg, shp.known);
            return cmd_shapes(cfg);
        }
        if (trn.sc->parsed()) {
            KvConfig cfg = trn.resolve();
            apply_seed_fallback(cfg);
            require_keys(cfg, {"data", "out"});
            log_resolved("train", cfg, trn.known);
            return cmd_train(cfg);
        }
        if (evl.sc->parsed()) {
            KvConfig cfg = evl.resolve();
            require_keys(cfg, {"data", "model"});
            log_resolved("eval", cfg, evl.known);
            return cmd_eval(cfg);
        }
        if (inf.sc->parsed()) {
            KvConfig cfg = inf.resolve();
            require_keys(cfg, {"model"});
            log_resolved("infer", cfg, inf.known);
            return cmd_infer(cfg, infer_images);
        }
        if (cmp.sc->parsed()) {
            KvConfig cfg = cmp.resolve();
            require_keys(cfg, {"data"});
            log_resolved("compare", cfg, cmp.known);
            return cmd_compare(cfg, compare_models);
        }
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    std::cerr << "error: no subcommand\n";
    return 1;
}
