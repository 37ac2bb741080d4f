#include "shapednet/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>

#include "shapednet/checkpoint.hpp"
#include "shapednet/format.hpp"
#include "shapednet/png_io.hpp"

namespace shapednet {

void TrainConfig::validate() const {
    if (epochs < 1) throw ConfigError("epochs must be >= 1");
    if (warmup_epochs < 0 || warmup_epochs >= epochs)
        throw ConfigError("warmup_epochs must be in [0, epochs)");
    if (!(lr_init > 0.0)) throw ConfigError("lr_init must be > 0");
    if (lr_min < 0.0 || lr_min > lr_init) throw ConfigError("lr_min must be in [0, lr_init]");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0)
        throw ConfigError("adam betas must be in [0,1)");
    if (!(adam_eps > 0.0)) throw ConfigError("adam_eps must be > 0");
    if (grad_clip < 0.0) throw ConfigError("grad_clip must be >= 0");
    weights.validate();
}

double glorot_limit(const Shape& shape) {
    if (shape.empty()) throw DimensionError("glorot_limit: empty shape");
    int64_t fan_in = 0, fan_out = 0;
    if (shape.size() == 4) {
        const int64_t rf = static_cast<int64_t>(shape[2]) * shape[3];
        fan_in = shape[1] * rf;
        fan_out = shape[0] * rf;
    } else if (shape.size() == 2) {
        fan_in = shape[1];
        fan_out = shape[0];
    } else if (shape.size() == 1) {
        fan_in = fan_out = shape[0];
    } else {
        throw DimensionError("glorot_limit: unsupported rank " + std::to_string(shape.size()));
    }
    return std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
}

Tensor init_glorot(const Shape& shape, uint64_t seed) {
    const double limit = glorot_limit(shape);
    Rng rng(seed);
    std::vector<double> v(static_cast<size_t>(shape_numel(shape)));
    for (double& x : v) x = rng.uniform(-limit, limit);
    return Tensor::param(shape, std::move(v));
}

namespace {

// cos(pi*x) with the three schedule landmarks made exact.
double cos_pi(double x) {
    if (x == 0.0) return 1.0;
    if (x == 0.5) return 0.0;
    if (x == 1.0) return -1.0;
    return std::cos(M_PI * x);
}

}  // namespace

double lr_at(int64_t step, int64_t steps_per_epoch, const TrainConfig& cfg) {
    cfg.validate();
    if (step < 0) throw ParameterError("lr_at: step must be >= 0");
    if (steps_per_epoch < 1) throw ParameterError("lr_at: steps_per_epoch must be >= 1");
    const int64_t warm = static_cast<int64_t>(cfg.warmup_epochs) * steps_per_epoch;
    const int64_t total = static_cast<int64_t>(cfg.epochs) * steps_per_epoch;
    if (step < warm)
        return cfg.lr_init * static_cast<double>(step + 1) / static_cast<double>(warm);
    const int64_t span = total - warm - 1;  // decay happens across the remaining steps
    if (span <= 0) return cfg.lr_init;
    const int64_t t = std::min(step, total - 1) - warm;
    if (t == 0) return cfg.lr_init;
    if (t == span) return cfg.lr_min;
    return cfg.lr_min + 0.5 * (cfg.lr_init - cfg.lr_min) *
                            (1.0 + cos_pi(static_cast<double>(t) / static_cast<double>(span)));
}

void AdamState::init(const std::vector<Tensor>& params) {
    m.clear();
    v.clear();
    t = 0;
    for (const Tensor& p : params) {
        m.emplace_back(static_cast<size_t>(p.numel()), 0.0);
        v.emplace_back(static_cast<size_t>(p.numel()), 0.0);
    }
}

void adam_step(std::vector<Tensor>& params, AdamState& state, double lr, double beta1,
               double beta2, double eps) {
    if (state.m.size() != params.size() || state.v.size() != params.size())
        throw TrainingError("adam state does not match parameter list");
    // Fail before mutating anything if a gradient is bad.
    for (Tensor& p : params)
        for (double g : p.grad())
            if (!std::isfinite(g)) throw TrainingError("non-finite gradient in adam_step");
    state.t += 1;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(state.t));
    for (size_t i = 0; i < params.size(); ++i) {
        std::vector<double>& theta = params[i].mutable_values();
        const std::vector<double>& grad = params[i].grad();
        std::vector<double>& m = state.m[i];
        std::vector<double>& v = state.v[i];
        if (grad.size() != theta.size())
            throw TrainingError("gradient buffer size mismatch in adam_step");
        for (size_t j = 0; j < theta.size(); ++j) {
            const double g = grad[j];
            m[j] = beta1 * m[j] + (1.0 - beta1) * g;
            v[j] = beta2 * v[j] + (1.0 - beta2) * g * g;
            const double mhat = m[j] / bc1;
            const double vhat = v[j] / bc2;
            theta[j] -= lr * mhat / (std::sqrt(vhat) + eps);
        }
    }
}

std::string TrainLog::serialize() const {
    std::string out;
    for (const EpochRecord& e : epochs) {
        out += "epoch=" + std::to_string(e.epoch);
        out += " coord_xy=" + format_double(e.train_loss.coord_xy);
        out += " coord_wh=" + format_double(e.train_loss.coord_wh);
        out += " obj_conf=" + format_double(e.train_loss.obj_conf);
        out += " noobj_conf=" + format_double(e.train_loss.noobj_conf);
        out += " classification=" + format_double(e.train_loss.classification);
        out += " bodyfat=" + format_double(e.train_loss.bodyfat);
        out += " total=" + format_double(e.train_loss.total);
        out += " val=" + format_double(e.val_loss);
        out += " lr=" + format_double(e.lr_last);
        out += "\n";
    }
    out += "best_epoch=" + std::to_string(best_epoch) + "\n";
    return out;
}

namespace {

struct PreparedSample {
    std::vector<double> chans;
    GridTarget target;
    std::vector<double> chans_flip;  // only populated when augmenting
    GridTarget target_flip;
};

PreparedSample prepare_sample(const SampleRecord& rec, const std::string& image_root,
                              const NetworkConfig& nc, bool with_flip) {
    const std::string path = image_root.empty() ? rec.image_path
                                                : image_root + "/" + rec.image_path;
    GrayImage img = read_png_gray(path);
    if (img.width != nc.input_size || img.height != nc.input_size)
        throw DimensionError("image " + path + " is " + std::to_string(img.width) + "x" +
                             std::to_string(img.height) + ", expected " +
                             std::to_string(nc.input_size) + "x" +
                             std::to_string(nc.input_size));
    PreparedSample ps;
    ps.chans = image_to_channels(img);
    GroundTruth g{rec.x, rec.y, rec.w, rec.h, 0};
    ps.target = assign_targets({g}, rec.bfp, nc);
    if (with_flip) {
        GrayImage flipped = img;
        for (int y = 0; y < img.height; ++y)
            for (int x = 0; x < img.width; ++x)
                flipped.pixels[static_cast<size_t>(y) * img.width + x] =
                    img.pixels[static_cast<size_t>(y) * img.width + (img.width - 1 - x)];
        ps.chans_flip = image_to_channels(flipped);
        GroundTruth gf = g;
        gf.x = 1.0 - g.x;
        ps.target_flip = assign_targets({gf}, rec.bfp, nc);
    }
    return ps;
}

void check_finite_breakdown(const LossBreakdown& b, int epoch, int64_t step) {
    const std::pair<const char*, double> terms[] = {
        {"coord_xy", b.coord_xy},       {"coord_wh", b.coord_wh},
        {"obj_conf", b.obj_conf},       {"noobj_conf", b.noobj_conf},
        {"classification", b.classification}, {"bodyfat", b.bodyfat},
        {"total", b.total}};
    for (const auto& [name, v] : terms)
        if (!std::isfinite(v))
            throw TrainingError(std::string("non-finite ") + name + " loss at epoch " +
                                std::to_string(epoch) + " step " + std::to_string(step));
}

}  // namespace

TrainResult train(ShapedNetModel& model, const std::vector<SampleRecord>& train_set,
                  const std::vector<SampleRecord>& val_set, const std::string& image_root,
                  const TrainConfig& cfg, const std::string& out_dir) {
    cfg.validate();
    if (train_set.empty()) throw DataError("train: empty training set");
    if (val_set.empty()) throw DataError("train: empty validation set");
    std::filesystem::create_directories(out_dir);
    const NetworkConfig& nc = model.config;

    std::vector<PreparedSample> train_prep, val_prep;
    train_prep.reserve(train_set.size());
    for (const SampleRecord& r : train_set)
        train_prep.push_back(prepare_sample(r, image_root, nc, cfg.hflip));
    val_prep.reserve(val_set.size());
    for (const SampleRecord& r : val_set)
        val_prep.push_back(prepare_sample(r, image_root, nc, false));

    if (cfg.bf_bias_init_mean && nc.regression_branch && model.bf_bias.defined()) {
        double sum = 0.0;
        for (const SampleRecord& r : train_set) sum += r.bfp;
        model.bf_bias.mutable_values()[0] = sum / static_cast<double>(train_set.size());
    }

    std::vector<Tensor> params = model.parameters();
    AdamState adam;
    adam.init(params);

    const int n_train = static_cast<int>(train_set.size());
    const int bs = cfg.batch_size;
    const int64_t steps_per_epoch = (n_train + bs - 1) / bs;
    const int S = nc.input_size;
    const size_t chan_len = static_cast<size_t>(3) * S * S;

    auto run_batch = [&](const std::vector<const PreparedSample*>& batch,
                         const std::vector<bool>& flip, bool training_mode,
                         Rng* dropout_rng) {
        const int nb = static_cast<int>(batch.size());
        std::vector<double> buf;
        buf.reserve(static_cast<size_t>(nb) * chan_len);
        std::vector<GridTarget> targets;
        targets.reserve(batch.size());
        for (size_t i = 0; i < batch.size(); ++i) {
            const bool f = !flip.empty() && flip[i];
            const std::vector<double>& src = f ? batch[i]->chans_flip : batch[i]->chans;
            buf.insert(buf.end(), src.begin(), src.end());
            targets.push_back(f ? batch[i]->target_flip : batch[i]->target);
        }
        Tensor images = Tensor::from({nb, 3, S, S}, std::move(buf));
        RawOutputs out = forward(model, images, training_mode, dropout_rng);
        return total_loss(out, targets, cfg.weights, cfg.bf_loss_mode, nc);
    };

    TrainLog log;
    double best_val = std::numeric_limits<double>::infinity();
    int best_epoch = 0;
    const std::string best_path = out_dir + "/best.snf1";
    int64_t gstep = 0;

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        const auto wall_start = std::chrono::steady_clock::now();
        Rng order_rng(Rng::derive(cfg.seed, 0x0E50C000u + static_cast<uint64_t>(epoch)));
        std::vector<int> order(static_cast<size_t>(n_train));
        std::iota(order.begin(), order.end(), 0);
        order_rng.shuffle(order);
        Rng flip_rng(Rng::derive(cfg.seed, 0xF11C0000u + static_cast<uint64_t>(epoch)));

        LossBreakdown epoch_sum{};
        for (int start = 0; start < n_train; start += bs) {
            const int nb = std::min(bs, n_train - start);
            std::vector<const PreparedSample*> batch;
            std::vector<bool> flip;
            for (int i = 0; i < nb; ++i) {
                batch.push_back(&train_prep[static_cast<size_t>(order[static_cast<size_t>(start + i)])]);
                flip.push_back(cfg.hflip && flip_rng.uniform() < 0.5);
            }
            Rng dropout_rng(Rng::derive(cfg.seed, 0xD0000000u + static_cast<uint64_t>(gstep)));
            LossResult lr_res = run_batch(batch, flip, true, &dropout_rng);
            check_finite_breakdown(lr_res.breakdown, epoch, gstep);
            for (Tensor& p : params) p.clear_grad();
            lr_res.total.backward();
            if (cfg.grad_clip > 0.0) {
                double sq = 0.0;
                for (Tensor& p : params)
                    for (double g : p.grad()) sq += g * g;
                const double norm = std::sqrt(sq);
                if (norm > cfg.grad_clip) {
                    const double scale = cfg.grad_clip / norm;
                    for (Tensor& p : params)
                        for (double& g : p.mutable_grad()) g *= scale;
                }
            }
            adam_step(params, adam, lr_at(gstep, steps_per_epoch, cfg), cfg.beta1, cfg.beta2,
                      cfg.adam_eps);
            epoch_sum.coord_xy += lr_res.breakdown.coord_xy * nb;
            epoch_sum.coord_wh += lr_res.breakdown.coord_wh * nb;
            epoch_sum.obj_conf += lr_res.breakdown.obj_conf * nb;
            epoch_sum.noobj_conf += lr_res.breakdown.noobj_conf * nb;
            epoch_sum.classification += lr_res.breakdown.classification * nb;
            epoch_sum.bodyfat += lr_res.breakdown.bodyfat * nb;
            epoch_sum.total += lr_res.breakdown.total * nb;
            ++gstep;
        }
        EpochRecord rec;
        rec.epoch = epoch;
        const double inv = 1.0 / static_cast<double>(n_train);
        rec.train_loss.coord_xy = epoch_sum.coord_xy * inv;
        rec.train_loss.coord_wh = epoch_sum.coord_wh * inv;
        rec.train_loss.obj_conf = epoch_sum.obj_conf * inv;
        rec.train_loss.noobj_conf = epoch_sum.noobj_conf * inv;
        rec.train_loss.classification = epoch_sum.classification * inv;
        rec.train_loss.bodyfat = epoch_sum.bodyfat * inv;
        rec.train_loss.total = epoch_sum.total * inv;
        rec.lr_last = lr_at(gstep - 1, steps_per_epoch, cfg);

        {
            NoGradGuard guard;
            double vsum = 0.0;
            const int n_val = static_cast<int>(val_prep.size());
            for (int start = 0; start < n_val; start += bs) {
                const int nb = std::min(bs, n_val - start);
                std::vector<const PreparedSample*> batch;
                for (int i = 0; i < nb; ++i)
                    batch.push_back(&val_prep[static_cast<size_t>(start + i)]);
                LossResult vres = run_batch(batch, {}, false, nullptr);
                vsum += vres.breakdown.total * nb;
            }
            rec.val_loss = vsum / static_cast<double>(n_val);
        }
        if (!std::isfinite(rec.val_loss))
            throw TrainingError("non-finite validation loss at epoch " + std::to_string(epoch));
        if (rec.val_loss < best_val) {
            best_val = rec.val_loss;
            best_epoch = epoch;
            save_checkpoint(best_path, model);
        }
        rec.wall_seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - wall_start).count();
        log.epochs.push_back(rec);
    }
    log.best_epoch = best_epoch;
    {
        std::ofstream os(out_dir + "/train_log.txt", std::ios::trunc);
        if (!os) throw IoError("cannot write train log in " + out_dir);
        os << log.serialize();
    }
    return {log, best_path};
}

}  // namespace shapednet
