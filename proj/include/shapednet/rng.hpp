#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

namespace shapednet {

// Deterministic random stream. std::mt19937_64 output is pinned by the
// standard, but the std distributions are not, so the uniform/normal/shuffle
// transforms live here and never change. Every consumer of randomness in the
// project goes through this class so that runs are byte-reproducible.
class Rng {
public:
    explicit Rng(uint64_t seed) : state_(seed ? seed : 0x9e3779b97f4a7c15ull) {
        // splitmix64 warmup decorrelates nearby seeds
        for (int i = 0; i < 4; ++i) next_u64();
    }

    uint64_t next_u64() {
        // splitmix64 (Steele, Lea, Flood 2014)
        state_ += 0x9e3779b97f4a7c15ull;
        uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    // uniform in [0, 1) with 53-bit resolution
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // uniform in [lo, hi)
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // unbiased integer in [0, n)
    uint64_t below(uint64_t n) {
        if (n == 0) return 0;
        uint64_t threshold = (0 - n) % n;
        for (;;) {
            uint64_t r = next_u64();
            if (r >= threshold) return r % n;
        }
    }

    // standard normal via Box-Muller (polar form avoided to keep the
    // consumption pattern fixed: exactly two draws per pair)
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        double u2 = uniform();
        if (u1 < 1e-300) u1 = 1e-300;
        double r = std::sqrt(-2.0 * std::log(u1));
        double theta = 2.0 * 3.14159265358979323846 * u2;
        spare_ = r * std::sin(theta);
        have_spare_ = true;
        return r * std::cos(theta);
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        // Fisher-Yates, back to front
        for (size_t i = v.size(); i > 1; --i) {
            size_t j = static_cast<size_t>(below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

    // Independent child stream; used for per-sample / per-tensor streams so
    // that adding or removing one consumer does not shift any other stream.
    static uint64_t derive(uint64_t seed, uint64_t salt) {
        uint64_t z = seed ^ (salt * 0xd6e8feb86659fd93ull + 0xa5a5a5a5a5a5a5a5ull);
        z = (z ^ (z >> 32)) * 0xd6e8feb86659fd93ull;
        z = (z ^ (z >> 32)) * 0xd6e8feb86659fd93ull;
        return z ^ (z >> 32);
    }

    // FNV-1a over a string, for name-salted streams
    static uint64_t hash_name(const char* s) {
        uint64_t h = 1469598103934665603ull;
        for (; *s; ++s) {
            h ^= static_cast<uint64_t>(static_cast<unsigned char>(*s));
            h *= 1099511628211ull;
        }
        return h;
    }

private:
    uint64_t state_;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

}  // namespace shapednet
