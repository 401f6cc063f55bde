#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "skyfuse/core.hpp"
#include "skyfuse/image.hpp"

namespace skyfuse {

namespace detail {

// Separable Gaussian blur with replicated borders, kernel cut at 3 sigma.
inline GrayImage gaussian_blur(const GrayImage& img, double sigma) {
    const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
    std::vector<double> kernel(2 * radius + 1);
    double sum = 0;
    for (int i = -radius; i <= radius; ++i) {
        kernel[i + radius] = std::exp(-0.5 * (i * i) / (sigma * sigma));
        sum += kernel[i + radius];
    }
    for (double& k : kernel) k /= sum;

    GrayImage tmp(img.width, img.height);
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x) {
            double acc = 0;
            for (int i = -radius; i <= radius; ++i) {
                const int xi = std::clamp(x + i, 0, img.width - 1);
                acc += kernel[i + radius] * img.at(xi, y);
            }
            tmp.at(x, y) = acc;
        }
    }
    GrayImage out(img.width, img.height);
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x) {
            double acc = 0;
            for (int i = -radius; i <= radius; ++i) {
                const int yi = std::clamp(y + i, 0, img.height - 1);
                acc += kernel[i + radius] * tmp.at(x, yi);
            }
            out.at(x, y) = acc;
        }
    }
    return out;
}

}  // namespace detail

// Removes slow shading (vignetting, sky gradient) by dividing the image by a
// heavily blurred copy of itself, then rescales so mean brightness is kept.
inline GrayImage flat_field_correct(const GrayImage& img, double sigma = 30.0) {
    if (img.width <= 0 || img.height <= 0)
        throw std::invalid_argument("flat_field_correct: empty image");
    if (sigma <= 0) throw std::invalid_argument("flat_field_correct: sigma must be positive");
    const GrayImage shading = detail::gaussian_blur(img, sigma);
    GrayImage out(img.width, img.height);
    const double eps = 1e-12;
    double in_mean = 0, raw_mean = 0;
    for (size_t i = 0; i < img.px.size(); ++i) {
        out.px[i] = img.px[i] / std::max(shading.px[i], eps);
        in_mean += img.px[i];
        raw_mean += out.px[i];
    }
    const double scale = raw_mean > 0 ? in_mean / raw_mean : 1.0;
    for (double& v : out.px) v = std::min(1.0, std::max(0.0, v * scale));
    return out;
}

// Linear remap of the 1st..99th percentile range onto [0, 1] with clipping.
// Percentiles use the nearest-rank rule. A flat image comes back unchanged.
inline GrayImage contrast_stretch(const GrayImage& img) {
    if (img.px.empty()) throw std::invalid_argument("contrast_stretch: empty image");
    std::vector<double> sorted(img.px);
    std::sort(sorted.begin(), sorted.end());
    const auto pct = [&](double q) {
        const size_t n = sorted.size();
        const size_t rank = std::min(
            n, std::max<size_t>(1, static_cast<size_t>(std::ceil(q / 100.0 * double(n)))));
        return sorted[rank - 1];
    };
    const double lo = pct(1.0), hi = pct(99.0);
    if (hi <= lo) return img;
    GrayImage out(img.width, img.height);
    for (size_t i = 0; i < img.px.size(); ++i)
        out.px[i] = std::min(1.0, std::max(0.0, (img.px[i] - lo) / (hi - lo)));
    return out;
}

struct CropRect {
    int x = 0;
    int y = 0;
    int w = 0;
    int h = 0;
};

inline GrayImage crop(const GrayImage& img, const CropRect& r) {
    if (r.w <= 0 || r.h <= 0 || r.x < 0 || r.y < 0 || r.x + r.w > img.width ||
        r.y + r.h > img.height)
        throw std::invalid_argument("crop: rect outside image");
    GrayImage out(r.w, r.h);
    for (int y = 0; y < r.h; ++y)
        for (int x = 0; x < r.w; ++x) out.at(x, y) = img.at(r.x + x, r.y + y);
    return out;
}

// Default region of interest: the sky half above the horizon row.
inline CropRect top_half(const GrayImage& img) {
    if (img.height % 2 != 0) throw std::invalid_argument("top_half: odd image height");
    return {0, 0, img.width, img.height / 2};
}

// ---------------------------------------------------------------------------
// Adaptive per-pixel mixture background model

struct GmmConfig {
    int num_modes = 5;
    double learning_rate = 0.05;
    double background_threshold = 0.85;  // cumulative weight that counts as background
    int training_frames = 10;            // masks are suppressed while the model settles
    double match_distance = 2.5;         // in sigmas
    double initial_variance = 0.01;      // intensity^2 for fresh modes
};

// Per-pixel mixture of Gaussians over intensity. Each frame, every pixel is
// matched against its modes in background order (weight/sigma descending);
// pixels whose value fits none of the leading modes that together exceed the
// background weight threshold are foreground. The matched mode is pulled
// toward the sample; when nothing matches, the weakest mode is replaced.
class GmmModel {
  public:
    GmmModel(int width, int height, GmmConfig cfg = {})
        : cfg_(cfg), width_(width), height_(height) {
        if (width <= 0 || height <= 0) throw std::invalid_argument("GmmModel: empty frame");
        if (cfg_.num_modes < 1 || cfg_.num_modes > 16)
            throw std::invalid_argument("GmmModel: unreasonable mode count");
        if (cfg_.learning_rate <= 0 || cfg_.learning_rate >= 1)
            throw std::invalid_argument("GmmModel: learning rate outside (0,1)");
        const size_t n = size_t(width) * height * cfg_.num_modes;
        weight_.assign(n, 0.0);
        mean_.assign(n, 0.0);
        var_.assign(n, cfg_.initial_variance);
    }

    BinaryImage apply(const GrayImage& frame) {
        if (frame.width != width_ || frame.height != height_)
            throw std::invalid_argument("GmmModel: frame size changed");
        BinaryImage mask(width_, height_);
        const int K = cfg_.num_modes;
        const double alpha = cfg_.learning_rate;
        std::vector<int> order(K);

        for (size_t p = 0; p < frame.px.size(); ++p) {
            const double x = frame.px[p];
            double* w = &weight_[p * K];
            double* mu = &mean_[p * K];
            double* var = &var_[p * K];

            if (frames_seen_ == 0) {
                w[0] = 1.0;
                mu[0] = x;
                continue;  // mask stays 0
            }

            // Background order: believable modes first.
            std::iota(order.begin(), order.end(), 0);
            std::sort(order.begin(), order.end(), [&](int a, int b) {
                return w[a] / std::sqrt(var[a]) > w[b] / std::sqrt(var[b]);
            });

            int background_prefix = K;
            double cum = 0;
            for (int r = 0; r < K; ++r) {
                cum += w[order[r]];
                if (cum > cfg_.background_threshold) {
                    background_prefix = r + 1;
                    break;
                }
            }

            int matched_rank = -1;
            for (int r = 0; r < K; ++r) {
                const int k = order[r];
                if (w[k] <= 0.0) continue;  // never-used slot, holds no evidence
                if (std::abs(x - mu[k]) <= cfg_.match_distance * std::sqrt(var[k])) {
                    matched_rank = r;
                    break;
                }
            }

            const bool foreground = matched_rank < 0 || matched_rank >= background_prefix;
            if (frames_seen_ >= cfg_.training_frames && foreground)
                mask.px[p] = 1;

            if (matched_rank >= 0) {
                const int k = order[matched_rank];
                for (int m = 0; m < K; ++m) w[m] *= 1.0 - alpha;
                w[k] += alpha;
                const double delta = x - mu[k];
                mu[k] += alpha * delta;
                var[k] = std::max(kMinVariance, (1.0 - alpha) * var[k] + alpha * delta * delta);
            } else {
                int weakest = 0;
                for (int m = 1; m < K; ++m)
                    if (w[m] < w[weakest]) weakest = m;
                w[weakest] = alpha;
                mu[weakest] = x;
                var[weakest] = cfg_.initial_variance;
            }

            double total = 0;
            for (int m = 0; m < K; ++m) total += w[m];
            for (int m = 0; m < K; ++m) w[m] /= total;
        }

        frames_seen_ += 1;
        return mask;
    }

    int frames_seen() const { return frames_seen_; }
    const GmmConfig& config() const { return cfg_; }

    // Sum of mode weights for one pixel; 1.0 up to rounding by construction.
    double weight_sum(int x, int y) const {
        const size_t p = (size_t(y) * width_ + x) * cfg_.num_modes;
        double total = 0;
        for (int m = 0; m < cfg_.num_modes; ++m) total += weight_[p + m];
        return total;
    }

    double mode_weight(int x, int y, int k) const {
        return weight_[(size_t(y) * width_ + x) * cfg_.num_modes + k];
    }
    double mode_mean(int x, int y, int k) const {
        return mean_[(size_t(y) * width_ + x) * cfg_.num_modes + k];
    }
    double mode_variance(int x, int y, int k) const {
        return var_[(size_t(y) * width_ + x) * cfg_.num_modes + k];
    }

  private:
    // Numeric floor so a perfectly repeating pixel cannot shrink its mode
    // into a zero-width spike that then rejects everything.
    static constexpr double kMinVariance = 1e-6;

    GmmConfig cfg_;
    int width_ = 0;
    int height_ = 0;
    int frames_seen_ = 0;
    std::vector<double> weight_, mean_, var_;  // K entries per pixel
};

// Morphological opening with the full 3x3 square: one erosion, one dilation.
// Pixels outside the frame count as empty.
inline BinaryImage morph_open(const BinaryImage& mask) {
    BinaryImage eroded(mask.width, mask.height);
    for (int y = 0; y < mask.height; ++y) {
        for (int x = 0; x < mask.width; ++x) {
            std::uint8_t all = 1;
            for (int dy = -1; dy <= 1 && all; ++dy) {
                for (int dx = -1; dx <= 1; ++dx) {
                    const int xi = x + dx, yi = y + dy;
                    if (xi < 0 || yi < 0 || xi >= mask.width || yi >= mask.height ||
                        !mask.at(xi, yi)) {
                        all = 0;
                        break;
                    }
                }
            }
            eroded.at(x, y) = all;
        }
    }
    BinaryImage out(mask.width, mask.height);
    for (int y = 0; y < mask.height; ++y) {
        for (int x = 0; x < mask.width; ++x) {
            std::uint8_t any = 0;
            for (int dy = -1; dy <= 1 && !any; ++dy) {
                for (int dx = -1; dx <= 1; ++dx) {
                    const int xi = x + dx, yi = y + dy;
                    if (xi >= 0 && yi >= 0 && xi < mask.width && yi < mask.height &&
                        eroded.at(xi, yi)) {
                        any = 1;
                        break;
                    }
                }
            }
            out.at(x, y) = any;
        }
    }
    return out;
}

struct Blob {
    double cx = 0;  // centroid, pixel coordinates
    double cy = 0;
    BBox bbox;
    int area = 0;
};

// 8-connected components of the mask, ordered by first pixel in scan order.
// Components larger than max_area are treated as scenery and dropped.
inline std::vector<Blob> blob_analysis(const BinaryImage& mask, int max_area = 1000) {
    if (max_area <= 0) throw std::invalid_argument("blob_analysis: max_area must be positive");
    std::vector<Blob> blobs;
    std::vector<std::uint8_t> seen(mask.px.size(), 0);
    std::vector<std::pair<int, int>> stack;

    for (int y0 = 0; y0 < mask.height; ++y0) {
        for (int x0 = 0; x0 < mask.width; ++x0) {
            const size_t p0 = size_t(y0) * mask.width + x0;
            if (!mask.px[p0] || seen[p0]) continue;
            stack.assign(1, {x0, y0});
            seen[p0] = 1;
            long long sx = 0, sy = 0;
            int minx = x0, maxx = x0, miny = y0, maxy = y0, area = 0;
            while (!stack.empty()) {
                const auto [x, y] = stack.back();
                stack.pop_back();
                area += 1;
                sx += x;
                sy += y;
                minx = std::min(minx, x);
                maxx = std::max(maxx, x);
                miny = std::min(miny, y);
                maxy = std::max(maxy, y);
                for (int dy = -1; dy <= 1; ++dy) {
                    for (int dx = -1; dx <= 1; ++dx) {
                        const int xi = x + dx, yi = y + dy;
                        if (xi < 0 || yi < 0 || xi >= mask.width || yi >= mask.height) continue;
                        const size_t pi = size_t(yi) * mask.width + xi;
                        if (mask.px[pi] && !seen[pi]) {
                            seen[pi] = 1;
                            stack.push_back({xi, yi});
                        }
                    }
                }
            }
            if (area > max_area) continue;
            Blob b;
            b.area = area;
            b.cx = double(sx) / area;
            b.cy = double(sy) / area;
            b.bbox = {double(minx), double(miny), double(maxx - minx + 1), double(maxy - miny + 1)};
            blobs.push_back(b);
        }
    }
    return blobs;
}

}  // namespace skyfuse
