#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <vector>

namespace shelltopics {

// splitmix64: used only to derive well-separated stream seeds.
inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// Stream rule: stream k of master seed s is mt19937_64 seeded with the
// (k+1)-th splitmix64 output of s.  Chains, restarts and simulation seeds
// all derive through this, so one master seed fixes every draw in a run.
inline std::uint64_t derive_stream_seed(std::uint64_t master, std::uint64_t stream) {
    std::uint64_t s = master;
    std::uint64_t out = 0;
    for (std::uint64_t k = 0; k <= stream; ++k) out = splitmix64(s);
    return out;
}

class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    static Rng for_stream(std::uint64_t master, std::uint64_t stream) {
        return Rng(derive_stream_seed(master, stream));
    }

    std::uint64_t next_u64() { return gen_(); }

    // 53-bit mantissa uniform in [0,1); independent of library distribution
    // internals so output is fully specified by the engine.
    double uniform() {
        return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [0, n) by rejection; n must be positive.
    std::uint64_t uniform_index(std::uint64_t n) {
        if (n == 0) throw std::invalid_argument("uniform_index: n must be positive");
        std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        std::uint64_t x;
        do {
            x = gen_();
        } while (x >= limit);
        return x % n;
    }

    bool bernoulli(double p) { return uniform() < p; }

    // Index draw from unnormalized nonnegative weights.
    int categorical(std::span<const double> w) {
        double total = 0.0;
        for (double v : w) total += v;
        if (!(total > 0.0)) throw std::runtime_error("categorical: zero total mass");
        double u = uniform() * total;
        double acc = 0.0;
        for (std::size_t i = 0; i + 1 < w.size(); ++i) {
            acc += w[i];
            if (u < acc) return static_cast<int>(i);
        }
        return static_cast<int>(w.size()) - 1;
    }

    // Index draw from log weights (max-shifted before exponentiation).
    int categorical_log(std::span<const double> logw) {
        std::vector<double> w(logw.begin(), logw.end());
        double m = *std::max_element(w.begin(), w.end());
        for (double& v : w) v = std::exp(v - m);
        return categorical(w);
    }

    double gamma(double shape) {
        std::gamma_distribution<double> d(shape, 1.0);
        return d(gen_);
    }

    std::vector<double> dirichlet(std::span<const double> conc) {
        std::vector<double> x(conc.size());
        double total = 0.0;
        for (std::size_t i = 0; i < conc.size(); ++i) {
            x[i] = gamma(conc[i]);
            total += x[i];
        }
        if (total <= 0.0) {
            // All-atom underflow; fall back to the concentration mean.
            double csum = 0.0;
            for (double c : conc) csum += c;
            for (std::size_t i = 0; i < conc.size(); ++i) x[i] = conc[i] / csum;
            return x;
        }
        for (double& v : x) v /= total;
        return x;
    }

    int poisson(double rate) {
        std::poisson_distribution<int> d(rate);
        return d(gen_);
    }

    double beta(double a, double b) {
        double x = gamma(a), y = gamma(b);
        return (x + y > 0.0) ? x / (x + y) : a / (a + b);
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = uniform_index(i);
            std::swap(v[i - 1], v[j]);
        }
    }

    std::vector<int> permutation(int n) {
        std::vector<int> p(n);
        for (int i = 0; i < n; ++i) p[i] = i;
        shuffle(p);
        return p;
    }

    std::mt19937_64& engine() { return gen_; }

private:
    std::mt19937_64 gen_;
};

} // namespace shelltopics
