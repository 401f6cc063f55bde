#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string_view>

namespace skyfuse {

// Counter-based stream generator. Output i of a stream is a pure function of
// (key, i), so runs are reproducible bit for bit, and child streams derived
// with split() are statistically independent of the parent and of each
// other. Adding draws to one stream never shifts any other stream.
class RngStream {
  public:
    explicit RngStream(std::uint64_t key) : key_(mix(key ^ 0x6A09E667F3BCC909ull)) {}

    RngStream split(std::string_view name) const {
        std::uint64_t h = 0xCBF29CE484222325ull;  // FNV-1a over the stream name
        for (char c : name) {
            h ^= static_cast<unsigned char>(c);
            h *= 0x100000001B3ull;
        }
        return RngStream(key_ ^ mix(h));
    }

    std::uint64_t next_u64() { return mix(key_ + (++counter_) * 0x9E3779B97F4A7C15ull); }

    // Uniform in [0, 1), 53 significant bits.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    bool bernoulli(double p) { return uniform() < p; }

    // Box-Muller; consumes exactly two draws per call.
    double normal() {
        const double u1 = std::max(uniform(), 0x1.0p-53);
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    // Rejection-sampled truncated normal; falls back to a clamp if the
    // window is so far in the tail that rejection keeps missing.
    double truncated_normal(double mean, double stddev, double lo, double hi) {
        if (!(lo < hi)) throw std::invalid_argument("truncated_normal: empty interval");
        for (int i = 0; i < 64; ++i) {
            const double x = normal(mean, stddev);
            if (x >= lo && x <= hi) return x;
        }
        return std::min(hi, std::max(lo, normal(mean, stddev)));
    }

    // Index drawn with probability proportional to weights[i].
    std::size_t categorical(std::span<const double> weights) {
        double total = 0;
        for (double w : weights) {
            if (w < 0) throw std::invalid_argument("categorical: negative weight");
            total += w;
        }
        if (total <= 0) throw std::invalid_argument("categorical: weights sum to zero");
        double u = uniform() * total;
        for (std::size_t i = 0; i < weights.size(); ++i) {
            u -= weights[i];
            if (u < 0) return i;
        }
        return weights.size() - 1;
    }

  private:
    static std::uint64_t mix(std::uint64_t z) {
        z += 0x9E3779B97F4A7C15ull;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return z ^ (z >> 31);
    }

    std::uint64_t key_ = 0;
    std::uint64_t counter_ = 0;
};

}  // namespace skyfuse
