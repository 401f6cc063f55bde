#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "skyfuse/core.hpp"

namespace skyfuse {

inline constexpr double kMfccPi = 3.14159265358979323846;
inline constexpr double kLogFloor = 1e-10;  // keeps log finite on silence

namespace detail {

// In-place iterative radix-2 FFT; size must be a power of two.
inline void fft_radix2(std::vector<std::complex<double>>& a) {
    const size_t n = a.size();
    if (n == 0 || (n & (n - 1)) != 0)
        throw std::invalid_argument("fft_radix2: size must be a power of two");
    for (size_t i = 1, j = 0; i < n; ++i) {
        size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(a[i], a[j]);
    }
    for (size_t len = 2; len <= n; len <<= 1) {
        const double ang = -2.0 * 3.14159265358979323846 / double(len);
        const std::complex<double> wl(std::cos(ang), std::sin(ang));
        for (size_t i = 0; i < n; i += len) {
            std::complex<double> w(1.0, 0.0);
            for (size_t k = 0; k < len / 2; ++k) {
                const auto u = a[i + k];
                const auto v = a[i + k + len / 2] * w;
                a[i + k] = u + v;
                a[i + k + len / 2] = u - v;
                w *= wl;
            }
        }
    }
}

inline size_t next_pow2(size_t n) {
    size_t p = 1;
    while (p < n) p <<= 1;
    return p;
}

inline double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
inline double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

}  // namespace detail

struct MfccConfig {
    int sample_rate = 44100;
    int window_length = 1323;  // 30 ms
    int overlap = 882;         // 20 ms, so the hop is 10 ms
    int num_coeffs = 13;       // c1..c13; c0 carries only overall level and is dropped
    int num_filters = 32;

    int hop() const { return window_length - overlap; }
};

// Number of complete analysis windows in a signal of n samples.
inline int mfcc_frame_count(size_t n, const MfccConfig& cfg = {}) {
    if (n < size_t(cfg.window_length)) return 0;
    return int((n - cfg.window_length) / cfg.hop()) + 1;
}

// Short-time cepstral features: Hamming window, zero-padded FFT, triangular
// mel filterbank over the magnitude spectrum, log, orthonormal DCT-II.
// Returns one row of num_coeffs coefficients per complete window.
inline std::vector<std::vector<double>> mfcc(const std::vector<double>& samples,
                                             const MfccConfig& cfg = {}) {
    if (cfg.window_length <= 0 || cfg.overlap < 0 || cfg.overlap >= cfg.window_length)
        throw std::invalid_argument("mfcc: overlap must be in [0, window_length)");
    if (cfg.num_coeffs < 1 || cfg.num_coeffs >= cfg.num_filters)
        throw std::invalid_argument("mfcc: need 1 <= num_coeffs < num_filters");

    const int L = cfg.window_length;
    const size_t nfft = detail::next_pow2(size_t(L));
    const size_t nbins = nfft / 2 + 1;
    const int M = cfg.num_filters;

    std::vector<double> window(L);
    for (int i = 0; i < L; ++i)
        window[i] = 0.54 - 0.46 * std::cos(2.0 * kMfccPi * i / (L - 1));

    // Triangular filters with edges evenly spaced on the mel scale across
    // [0, fs/2]; unit peak, no area normalization.
    std::vector<double> edges(M + 2);
    const double mel_max = detail::hz_to_mel(cfg.sample_rate / 2.0);
    for (int m = 0; m < M + 2; ++m)
        edges[m] = detail::mel_to_hz(mel_max * m / double(M + 1));
    std::vector<std::vector<double>> fbank(M, std::vector<double>(nbins, 0.0));
    for (int m = 0; m < M; ++m) {
        const double lo = edges[m], mid = edges[m + 1], hi = edges[m + 2];
        for (size_t k = 0; k < nbins; ++k) {
            const double f = double(k) * cfg.sample_rate / double(nfft);
            if (f > lo && f < mid)
                fbank[m][k] = (f - lo) / (mid - lo);
            else if (f >= mid && f < hi)
                fbank[m][k] = (hi - f) / (hi - mid);
        }
    }

    const int frames = mfcc_frame_count(samples.size(), cfg);
    std::vector<std::vector<double>> out;
    out.reserve(frames);
    std::vector<std::complex<double>> buf(nfft);
    std::vector<double> logband(M);

    for (int f = 0; f < frames; ++f) {
        const size_t start = size_t(f) * cfg.hop();
        for (size_t i = 0; i < nfft; ++i)
            buf[i] = i < size_t(L) ? samples[start + i] * window[i] : 0.0;
        detail::fft_radix2(buf);
        for (int m = 0; m < M; ++m) {
            double e = 0;
            for (size_t k = 0; k < nbins; ++k)
                if (fbank[m][k] != 0.0) e += fbank[m][k] * std::abs(buf[k]);
            logband[m] = std::log(std::max(e, kLogFloor));
        }
        // Orthonormal DCT-II, keeping coefficients 1..num_coeffs.
        std::vector<double> row(cfg.num_coeffs);
        const double norm = std::sqrt(2.0 / M);
        for (int c = 1; c <= cfg.num_coeffs; ++c) {
            double acc = 0;
            for (int m = 0; m < M; ++m)
                acc += logband[m] * std::cos(kMfccPi * c * (2 * m + 1) / (2.0 * M));
            row[c - 1] = norm * acc;
        }
        out.push_back(std::move(row));
    }
    return out;
}

// Cuts a long recording into overlapping one-second buffers starting every
// step_s seconds, keeping only windows that fit completely.
inline std::vector<std::vector<double>> slice_clips(const std::vector<double>& samples,
                                                    int sample_rate = 44100,
                                                    double window_s = 1.0, double step_s = 0.5) {
    if (window_s <= 0 || step_s <= 0) throw std::invalid_argument("slice_clips: bad window/step");
    const size_t win = size_t(std::llround(window_s * sample_rate));
    const size_t step = size_t(std::llround(step_s * sample_rate));
    std::vector<std::vector<double>> out;
    for (size_t start = 0; start + win <= samples.size(); start += step)
        out.emplace_back(samples.begin() + start, samples.begin() + start + win);
    return out;
}

// ---------------------------------------------------------------------------
// Baseline sound classifier: nearest class centroid over time-averaged,
// per-dimension standardized MFCC vectors, with softmax(-distance) as the
// reported confidence.

class NearestCentroidClassifier {
  public:
    static constexpr std::array<TargetClass, 3> kClasses = {
        TargetClass::Drone, TargetClass::Helicopter, TargetClass::Background};

    void train(const std::vector<std::vector<std::vector<double>>>& clips,
               const std::vector<TargetClass>& labels) {
        if (clips.empty() || clips.size() != labels.size())
            throw std::invalid_argument("train: need matching clips and labels");
        const size_t dim = feature(clips[0]).size();
        std::vector<std::vector<double>> feats(clips.size());
        for (size_t i = 0; i < clips.size(); ++i) {
            feats[i] = feature(clips[i]);
            if (feats[i].size() != dim) throw std::invalid_argument("train: mixed feature sizes");
        }

        mean_.assign(dim, 0.0);
        stddev_.assign(dim, 0.0);
        for (const auto& f : feats)
            for (size_t d = 0; d < dim; ++d) mean_[d] += f[d];
        for (double& m : mean_) m /= double(feats.size());
        for (const auto& f : feats)
            for (size_t d = 0; d < dim; ++d)
                stddev_[d] += (f[d] - mean_[d]) * (f[d] - mean_[d]);
        for (double& s : stddev_) s = std::max(std::sqrt(s / double(feats.size())), 1e-12);

        centroids_.assign(kClasses.size(), std::vector<double>(dim, 0.0));
        std::array<int, 3> counts{};
        for (size_t i = 0; i < feats.size(); ++i) {
            const int c = class_index(labels[i]);
            for (size_t d = 0; d < dim; ++d)
                centroids_[c][d] += (feats[i][d] - mean_[d]) / stddev_[d];
            counts[c] += 1;
        }
        for (size_t c = 0; c < kClasses.size(); ++c) {
            if (counts[c] == 0)
                throw std::invalid_argument("train: class without examples: " +
                                            to_string(kClasses[c]));
            for (double& v : centroids_[c]) v /= double(counts[c]);
        }
        trained_ = true;
    }

    std::pair<TargetClass, double> predict(const std::vector<std::vector<double>>& clip) const {
        if (!trained_) throw std::logic_error("predict: classifier not trained");
        const auto f = feature(clip);
        std::array<double, 3> dist{};
        for (size_t c = 0; c < kClasses.size(); ++c) {
            double acc = 0;
            for (size_t d = 0; d < f.size(); ++d) {
                const double z = (f[d] - mean_[d]) / stddev_[d] - centroids_[c][d];
                acc += z * z;
            }
            dist[c] = std::sqrt(acc);
        }
        std::array<double, 3> soft{};
        double total = 0;
        const double ref = *std::min_element(dist.begin(), dist.end());
        for (size_t c = 0; c < 3; ++c) {
            soft[c] = std::exp(ref - dist[c]);  // shifted for numeric safety
            total += soft[c];
        }
        size_t best = 0;
        for (size_t c = 1; c < 3; ++c)
            if (soft[c] > soft[best]) best = c;
        return {kClasses[best], soft[best] / total};
    }

    // Per-clip feature: MFCC rows averaged over time.
    static std::vector<double> feature(const std::vector<std::vector<double>>& clip) {
        if (clip.empty()) throw std::invalid_argument("feature: empty mfcc sequence");
        std::vector<double> f(clip[0].size(), 0.0);
        for (const auto& row : clip)
            for (size_t d = 0; d < f.size(); ++d) f[d] += row[d];
        for (double& v : f) v /= double(clip.size());
        return f;
    }

  private:
    static int class_index(TargetClass c) {
        for (size_t i = 0; i < kClasses.size(); ++i)
            if (kClasses[i] == c) return int(i);
        throw std::invalid_argument("class out of the audio label set: " + to_string(c));
    }

    bool trained_ = false;
    std::vector<double> mean_, stddev_;
    std::vector<std::vector<double>> centroids_;
};

// ---------------------------------------------------------------------------
// Minimal WAV I/O, PCM16 mono only.

struct WavData {
    int sample_rate = 0;
    std::vector<double> samples;  // [-1, 1]
};

inline WavData load_wav(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw SchemaError("cannot open wav: " + path);
    auto read_u32 = [&]() {
        unsigned char b[4];
        in.read(reinterpret_cast<char*>(b), 4);
        return std::uint32_t(b[0]) | std::uint32_t(b[1]) << 8 | std::uint32_t(b[2]) << 16 |
               std::uint32_t(b[3]) << 24;
    };
    auto read_u16 = [&]() {
        unsigned char b[2];
        in.read(reinterpret_cast<char*>(b), 2);
        return std::uint16_t(b[0] | b[1] << 8);
    };
    char tag[4];
    in.read(tag, 4);
    if (!in || std::string(tag, 4) != "RIFF") throw SchemaError("not a RIFF file: " + path);
    read_u32();
    in.read(tag, 4);
    if (!in || std::string(tag, 4) != "WAVE") throw SchemaError("not a WAVE file: " + path);

    WavData wav;
    bool have_fmt = false;
    while (in.read(tag, 4)) {
        const std::uint32_t size = read_u32();
        const std::string chunk(tag, 4);
        if (chunk == "fmt ") {
            const auto fmt = read_u16();
            const auto channels = read_u16();
            wav.sample_rate = int(read_u32());
            read_u32();  // byte rate
            read_u16();  // block align
            const auto bits = read_u16();
            if (fmt != 1 || channels != 1 || bits != 16)
                throw SchemaError("wav must be PCM16 mono: " + path);
            if (size > 16) in.seekg(size - 16, std::ios::cur);
            have_fmt = true;
        } else if (chunk == "data") {
            if (!have_fmt) throw SchemaError("wav data before fmt: " + path);
            const size_t n = size / 2;
            wav.samples.resize(n);
            for (size_t i = 0; i < n; ++i) {
                const std::uint16_t u = read_u16();
                wav.samples[i] = double(std::int16_t(u)) / 32768.0;
            }
            return wav;
        } else {
            in.seekg(size + (size & 1), std::ios::cur);
        }
    }
    throw SchemaError("wav has no data chunk: " + path);
}

inline void save_wav(const std::string& path, int sample_rate,
                     const std::vector<double>& samples) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw SchemaError("cannot write wav: " + path);
    auto w_u32 = [&](std::uint32_t v) {
        char b[4] = {char(v), char(v >> 8), char(v >> 16), char(v >> 24)};
        out.write(b, 4);
    };
    auto w_u16 = [&](std::uint16_t v) {
        char b[2] = {char(v), char(v >> 8)};
        out.write(b, 2);
    };
    const std::uint32_t data_bytes = std::uint32_t(samples.size() * 2);
    out.write("RIFF", 4);
    w_u32(36 + data_bytes);
    out.write("WAVE", 4);
    out.write("fmt ", 4);
    w_u32(16);
    w_u16(1);  // PCM
    w_u16(1);  // mono
    w_u32(std::uint32_t(sample_rate));
    w_u32(std::uint32_t(sample_rate * 2));
    w_u16(2);
    w_u16(16);
    out.write("data", 4);
    w_u32(data_bytes);
    for (double s : samples) {
        const double v = std::min(1.0, std::max(-1.0, s));
        w_u16(std::uint16_t(std::int16_t(std::lround(v * 32767.0))));
    }
}

}  // namespace skyfuse
