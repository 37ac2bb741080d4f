#include "shapednet/stats.hpp"

#include <algorithm>
#include <array>
#include <cmath>

namespace shapednet {

namespace {

MeanSd mean_sd(const std::vector<double>& xs) {
    MeanSd r;
    const size_t n = xs.size();
    if (n == 0) throw DataError("cannot summarize an empty sample");
    double sum = 0.0;
    for (double x : xs) sum += x;
    r.mean = sum / static_cast<double>(n);
    if (n < 2) return r;
    double sq = 0.0;
    for (double x : xs) sq += (x - r.mean) * (x - r.mean);
    r.sd = std::sqrt(sq / static_cast<double>(n - 1));
    return r;
}

std::vector<double> per_subject(const std::vector<BfPair>& pairs,
                                double (*f)(const BfPair&)) {
    std::vector<double> out;
    out.reserve(pairs.size());
    for (const BfPair& p : pairs) {
        if (!(p.truth > 0.0)) throw DataError("reference body fat must be positive");
        out.push_back(f(p));
    }
    return out;
}

}  // namespace

MeanSd mape(const std::vector<BfPair>& pairs) {
    return mean_sd(per_subject(
        pairs, +[](const BfPair& p) { return 100.0 * std::abs(p.pred - p.truth) / p.truth; }));
}

MeanSd mae(const std::vector<BfPair>& pairs) {
    return mean_sd(per_subject(pairs, +[](const BfPair& p) { return std::abs(p.pred - p.truth); }));
}

MeanSd msd(const std::vector<BfPair>& pairs) {
    return mean_sd(per_subject(pairs, +[](const BfPair& p) { return p.pred - p.truth; }));
}

double log_gamma(double x) {
    // Lanczos approximation (g = 7, 9 coefficients); accurate to ~1e-13 for
    // the positive arguments used here.
    static const double coef[9] = {0.99999999999980993,  676.5203681218851,
                                   -1259.1392167224028,  771.32342877765313,
                                   -176.61502916214059,  12.507343278686905,
                                   -0.13857109526572012, 9.9843695780195716e-6,
                                   1.5056327351493116e-7};
    if (!(x > 0.0)) throw ParameterError("log_gamma requires x > 0");
    if (x < 0.5) {
        // Reflection keeps small arguments accurate.
        return std::log(M_PI / std::sin(M_PI * x)) - log_gamma(1.0 - x);
    }
    const double z = x - 1.0;
    double a = coef[0];
    for (int i = 1; i < 9; ++i) a += coef[i] / (z + i);
    const double t = z + 7.5;
    return 0.5 * std::log(2.0 * M_PI) + (z + 0.5) * std::log(t) - t + std::log(a);
}

namespace {

// Continued fraction for the regularized incomplete beta (modified Lentz).
double beta_cf(double a, double b, double x) {
    const double tiny = 1e-300;
    const double eps = 1e-15;
    const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::abs(d) < tiny) d = tiny;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= 300; ++m) {
        const double m2 = 2.0 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < tiny) d = tiny;
        c = 1.0 + aa / c;
        if (std::abs(c) < tiny) c = tiny;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < tiny) d = tiny;
        c = 1.0 + aa / c;
        if (std::abs(c) < tiny) c = tiny;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::abs(del - 1.0) < eps) break;
    }
    return h;
}

}  // namespace

double incomplete_beta(double a, double b, double x) {
    if (!(a > 0.0) || !(b > 0.0)) throw ParameterError("incomplete_beta requires a,b > 0");
    if (x < 0.0 || x > 1.0) throw ParameterError("incomplete_beta requires x in [0,1]");
    if (x == 0.0) return 0.0;
    if (x == 1.0) return 1.0;
    const double ln_bt = log_gamma(a + b) - log_gamma(a) - log_gamma(b) + a * std::log(x) +
                         b * std::log(1.0 - x);
    const double bt = std::exp(ln_bt);
    if (x < (a + 1.0) / (a + b + 2.0)) return bt * beta_cf(a, b, x) / a;
    return 1.0 - bt * beta_cf(b, a, 1.0 - x) / b;
}

double student_t_cdf(double t, double dof) {
    if (!(dof > 0.0)) throw ParameterError("student_t_cdf requires dof > 0");
    if (t == 0.0) return 0.5;
    const double x = dof / (dof + t * t);
    const double half_tail = 0.5 * incomplete_beta(dof / 2.0, 0.5, x);
    return t > 0.0 ? 1.0 - half_tail : half_tail;
}

double student_t_quantile(double p, double dof) {
    if (!(dof > 0.0)) throw ParameterError("student_t_quantile requires dof > 0");
    if (!(p > 0.0) || !(p < 1.0)) throw ParameterError("quantile requires p in (0,1)");
    if (p == 0.5) return 0.0;
    if (p < 0.5) return -student_t_quantile(1.0 - p, dof);
    double lo = 0.0, hi = 1.0;
    while (student_t_cdf(hi, dof) < p) {
        hi *= 2.0;
        if (hi > 1e12) break;
    }
    for (int i = 0; i < 200; ++i) {
        const double mid = 0.5 * (lo + hi);
        if (student_t_cdf(mid, dof) < p)
            lo = mid;
        else
            hi = mid;
        if (hi - lo < 1e-12 * std::max(1.0, hi)) break;
    }
    return 0.5 * (lo + hi);
}

double normal_pdf(double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI); }

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

namespace {

// Fixed 20-point Gauss-Legendre rule on [-1,1]; nodes found once by Newton
// iteration on the Legendre polynomial.
struct GaussRule {
    std::array<double, 20> node{}, weight{};
    GaussRule() {
        const int n = 20;
        for (int i = 0; i < n; ++i) {
            double x = std::cos(M_PI * (i + 0.75) / (n + 0.5));
            for (int it = 0; it < 100; ++it) {
                double p0 = 1.0, p1 = x;
                for (int k = 2; k <= n; ++k) {
                    const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
                    p0 = p1;
                    p1 = p2;
                }
                const double dp = n * (x * p1 - p0) / (x * x - 1.0);
                const double x_new = x - p1 / dp;
                if (std::abs(x_new - x) < 1e-15) {
                    x = x_new;
                    break;
                }
                x = x_new;
            }
            double p0 = 1.0, p1 = x;
            for (int k = 2; k <= n; ++k) {
                const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
                p0 = p1;
                p1 = p2;
            }
            const double dp = n * (x * p1 - p0) / (x * x - 1.0);
            node[static_cast<size_t>(i)] = x;
            weight[static_cast<size_t>(i)] = 2.0 / ((1.0 - x * x) * dp * dp);
        }
    }
};

const GaussRule& gauss() {
    static const GaussRule rule;
    return rule;
}

template <typename F>
double integrate_panels(F f, double lo, double hi, int panels) {
    const GaussRule& g = gauss();
    double sum = 0.0;
    const double w = (hi - lo) / panels;
    for (int p = 0; p < panels; ++p) {
        const double a = lo + p * w, mid = a + 0.5 * w, half = 0.5 * w;
        double part = 0.0;
        for (int i = 0; i < 20; ++i)
            part += g.weight[static_cast<size_t>(i)] * f(mid + half * g.node[static_cast<size_t>(i)]);
        sum += part * half;
    }
    return sum;
}

// CDF of the range of k iid standard normals.
double normal_range_cdf(double w, int k) {
    if (w <= 0.0) return 0.0;
    auto inner = [&](double z) {
        return normal_pdf(z) * std::pow(normal_cdf(z) - normal_cdf(z - w), k - 1);
    };
    // Integrand support: z within ~8 sd of either boundary.
    const double lo = -8.5, hi = 8.5 + w;
    const int panels = std::max(12, static_cast<int>(std::ceil(hi - lo)));
    return k * integrate_panels(inner, lo, hi, panels);
}

}  // namespace

double studentized_range_cdf(double q, int k, double dof) {
    if (k < 2) throw ParameterError("studentized range requires k >= 2");
    if (!(dof > 0.0)) throw ParameterError("studentized range requires dof > 0");
    if (q <= 0.0) return 0.0;
    // Scale mixture over s = sqrt(chi^2_dof / dof).
    const double ln_norm = (dof / 2.0) * std::log(dof / 2.0) - log_gamma(dof / 2.0);
    auto outer = [&](double s) {
        const double ln_pdf = ln_norm + (dof - 1.0) * std::log(s) - dof * s * s / 2.0 +
                              std::log(2.0);
        return std::exp(ln_pdf) * normal_range_cdf(q * s, k);
    };
    // The chi-over-sqrt-dof density concentrates near 1 with width ~1/sqrt(dof).
    const double s_hi = 1.0 + 12.0 / std::sqrt(dof) + 2.0;
    const int panels = std::max({24, static_cast<int>(std::ceil(8.0 * s_hi)),
                                 static_cast<int>(std::ceil(4.0 * std::sqrt(dof)))});
    const double v = integrate_panels(outer, 1e-12, s_hi, panels);
    return std::min(1.0, std::max(0.0, v));
}

ConfInterval t_confidence_interval(const std::vector<double>& samples, double alpha) {
    if (samples.size() < 2)
        throw DataError("confidence interval requires at least 2 samples");
    if (!(alpha > 0.0) || !(alpha < 1.0)) throw ParameterError("alpha must be in (0,1)");
    const MeanSd ms = mean_sd(samples);
    const double n = static_cast<double>(samples.size());
    const double t = student_t_quantile(1.0 - alpha / 2.0, n - 1.0);
    const double half = t * ms.sd / std::sqrt(n);
    return {ms.mean - half, ms.mean + half};
}

double spread(const ConfInterval& ci) {
    if (ci.hi < ci.lo) throw DataError("inverted confidence interval");
    return ci.hi - ci.lo;
}

std::vector<TukeyPair> tukey_hsd(const std::vector<NamedSamples>& groups, double alpha) {
    if (groups.size() < 2) throw DataError("tukey_hsd requires at least 2 groups");
    if (!(alpha > 0.0) || !(alpha < 1.0)) throw ParameterError("alpha must be in (0,1)");
    const int k = static_cast<int>(groups.size());
    int64_t total_n = 0;
    std::vector<double> means;
    for (const NamedSamples& g : groups) {
        if (g.values.size() < 2)
            throw DataError("tukey_hsd: group '" + g.name + "' needs at least 2 values");
        means.push_back(mean_sd(g.values).mean);
        total_n += static_cast<int64_t>(g.values.size());
    }
    const double dof = static_cast<double>(total_n - k);
    double ss_within = 0.0;
    for (size_t gi = 0; gi < groups.size(); ++gi)
        for (double x : groups[gi].values)
            ss_within += (x - means[gi]) * (x - means[gi]);
    const double mse = ss_within / dof;

    std::vector<TukeyPair> out;
    for (size_t a = 0; a < groups.size(); ++a) {
        for (size_t b = a + 1; b < groups.size(); ++b) {
            TukeyPair tp;
            tp.group_a = groups[a].name;
            tp.group_b = groups[b].name;
            tp.md = means[a] - means[b];
            const double na = static_cast<double>(groups[a].values.size());
            const double nb = static_cast<double>(groups[b].values.size());
            // Tukey-Kramer standard error for unequal group sizes.
            const double se = std::sqrt(mse * (1.0 / na + 1.0 / nb) / 2.0);
            if (se == 0.0) {
                tp.p = tp.md == 0.0 ? 1.0 : 0.0;
            } else {
                const double q = std::abs(tp.md) / se;
                tp.p = std::min(1.0, std::max(0.0, 1.0 - studentized_range_cdf(q, k, dof)));
            }
            tp.reject = tp.p < alpha;
            out.push_back(std::move(tp));
        }
    }
    return out;
}

}  // namespace shapednet
