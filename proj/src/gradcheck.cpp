#include "shapednet/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace shapednet {

double grad_rel_err(double a, double b) {
    if (!std::isfinite(a) || !std::isfinite(b)) throw EvalError("grad check: non-finite value");
    return std::fabs(a - b) / std::max({std::fabs(a), std::fabs(b), 1e-8});
}

namespace {

double fd_at(const std::function<double()>& f, std::vector<double>& storage, size_t i,
             double h) {
    const double saved = storage[i];
    storage[i] = saved + h;
    const double fp = f();
    storage[i] = saved - h;
    const double fm = f();
    storage[i] = saved;
    if (!std::isfinite(fp) || !std::isfinite(fm))
        throw EvalError("grad check: objective non-finite near evaluation point");
    return (fp - fm) / (2.0 * h);
}

}  // namespace

double grad_check(const std::function<double()>& f, std::vector<Tensor>& params, double h) {
    if (h <= 0.0) throw ParameterError("grad_check: h must be > 0");
    double worst = 0.0;
    for (Tensor& p : params) {
        const std::vector<double>& g = p.grad();
        if (g.size() != p.values().size())
            throw EvalError("grad_check: parameter has no gradient; run backward first");
        std::vector<double>& v = p.mutable_values();
        for (size_t i = 0; i < v.size(); ++i)
            worst = std::max(worst, grad_rel_err(g[i], fd_at(f, v, i, h)));
    }
    return worst;
}

double grad_check_directional(const std::function<double()>& f,
                              std::vector<Tensor>& params, double h, Rng& rng,
                              int n_directions) {
    if (h <= 0.0) throw ParameterError("grad_check: h must be > 0");
    size_t total = 0;
    for (const Tensor& p : params) total += p.values().size();
    double worst = 0.0;
    for (int d = 0; d < n_directions; ++d) {
        std::vector<double> dir(total);
        double norm_sq = 0.0;
        for (size_t i = 0; i < total; ++i) {
            dir[i] = rng.normal();
            norm_sq += dir[i] * dir[i];
        }
        const double inv_norm = 1.0 / std::sqrt(norm_sq);
        for (double& x : dir) x *= inv_norm;

        double directional = 0.0;
        {
            size_t off = 0;
            for (Tensor& p : params) {
                const std::vector<double>& g = p.grad();
                if (g.size() != p.values().size())
                    throw EvalError("grad_check: parameter has no gradient; run backward first");
                for (size_t i = 0; i < g.size(); ++i) directional += g[i] * dir[off + i];
                off += g.size();
            }
        }
        auto shift = [&](double sign) {
            size_t off = 0;
            for (Tensor& p : params) {
                std::vector<double>& v = p.mutable_values();
                for (size_t i = 0; i < v.size(); ++i) v[i] += sign * h * dir[off + i];
                off += v.size();
            }
        };
        shift(+1.0);
        const double fp = f();
        shift(-2.0);
        const double fm = f();
        shift(+1.0);
        if (!std::isfinite(fp) || !std::isfinite(fm))
            throw EvalError("grad check: objective non-finite near evaluation point");
        worst = std::max(worst, grad_rel_err(directional, (fp - fm) / (2.0 * h)));
    }
    return worst;
}

double grad_check_sampled(const std::function<double()>& f,
                          std::vector<Tensor>& params, double h, Rng& rng,
                          int per_tensor, double abs_floor) {
    return grad_check_sampled(f, params, std::vector<double>{h}, rng, per_tensor,
                              abs_floor);
}

double grad_check_sampled(const std::function<double()>& f,
                          std::vector<Tensor>& params,
                          const std::vector<double>& step_ladder, Rng& rng,
                          int per_tensor, double abs_floor) {
    if (step_ladder.empty()) throw ParameterError("grad_check: empty step ladder");
    for (double h : step_ladder)
        if (h <= 0.0) throw ParameterError("grad_check: h must be > 0");
    double worst = 0.0;
    for (Tensor& p : params) {
        const std::vector<double>& g = p.grad();
        if (g.size() != p.values().size())
            throw EvalError("grad_check: parameter has no gradient; run backward first");
        std::vector<double>& v = p.mutable_values();
        const size_t n = v.size();
        std::vector<size_t> picks;
        if (n <= static_cast<size_t>(per_tensor)) {
            picks.resize(n);
            for (size_t i = 0; i < n; ++i) picks[i] = i;
        } else {
            for (int k = 0; k < per_tensor; ++k) picks.push_back(static_cast<size_t>(rng.below(n)));
            std::sort(picks.begin(), picks.end());
            picks.erase(std::unique(picks.begin(), picks.end()), picks.end());
        }
        for (size_t i : picks) {
            double best = std::numeric_limits<double>::infinity();
            for (double h : step_ladder) {
                const double fd = fd_at(f, v, i, h);
                double err;
                if (std::max(std::fabs(g[i]), std::fabs(fd)) < abs_floor)
                    err = std::fabs(g[i] - fd) > abs_floor ? grad_rel_err(g[i], fd) : 0.0;
                else
                    err = grad_rel_err(g[i], fd);
                best = std::min(best, err);
                if (best == 0.0) break;
            }
            worst = std::max(worst, best);
        }
    }
    return worst;
}

}  // namespace shapednet
