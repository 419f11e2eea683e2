#include <algorithm>
#include <cmath>

#include "scp/data.hpp"

namespace scp {

namespace {

struct Tap {
    int lo, hi;
    double frac;
};

// Half-pixel-centred sampling positions.
std::vector<Tap> resize_taps(int in, int out) {
    std::vector<Tap> taps(out);
    const double scale = static_cast<double>(in) / out;
    for (int o = 0; o < out; ++o) {
        double src = (o + 0.5) * scale - 0.5;
        src = std::clamp(src, 0.0, static_cast<double>(in - 1));
        const int lo = static_cast<int>(std::floor(src));
        taps[o] = {lo, std::min(lo + 1, in - 1), src - lo};
    }
    return taps;
}

}  // namespace

Tensor3<float> resize_bilinear(std::span<const float> src, int height, int width, int out_h, int out_w) {
    if (src.size() != static_cast<std::size_t>(height) * width) throw InvalidInput("resize_bilinear: size mismatch");
    Tensor3<float> out(1, out_h, out_w);
    const auto ty = resize_taps(height, out_h);
    const auto tx = resize_taps(width, out_w);
    for (int y = 0; y < out_h; ++y) {
        const auto& a = ty[y];
        for (int x = 0; x < out_w; ++x) {
            const auto& b = tx[x];
            const double top = src[a.lo * width + b.lo] * (1.0 - b.frac) + src[a.lo * width + b.hi] * b.frac;
            const double bot = src[a.hi * width + b.lo] * (1.0 - b.frac) + src[a.hi * width + b.hi] * b.frac;
            out(0, y, x) = static_cast<float>(top * (1.0 - a.frac) + bot * a.frac);
        }
    }
    return out;
}

Tensor3<std::uint8_t> resize_nearest(std::span<const std::uint8_t> src, int height, int width, int out_h,
                                     int out_w) {
    if (src.size() != static_cast<std::size_t>(height) * width) throw InvalidInput("resize_nearest: size mismatch");
    Tensor3<std::uint8_t> out(1, out_h, out_w);
    for (int y = 0; y < out_h; ++y) {
        const int sy = std::min(height - 1, static_cast<int>((y + 0.5) * height / out_h));
        for (int x = 0; x < out_w; ++x) {
            const int sx = std::min(width - 1, static_cast<int>((x + 0.5) * width / out_w));
            out(0, y, x) = src[sy * width + sx];
        }
    }
    return out;
}

PreprocessedSlice preprocess_slice(std::span<const float> slice, int height, int width,
                                   std::optional<std::span<const std::uint8_t>> label, int class_count,
                                   int target_size) {
    if (target_size <= 0) throw InvalidInput("preprocess_slice: target size must be positive");
    for (float v : slice) {
        if (!std::isfinite(v)) throw InvalidInput("preprocess_slice: non-finite voxel");
    }
    PreprocessedSlice out;
    const auto [lo_it, hi_it] = std::minmax_element(slice.begin(), slice.end());
    out.constant = *lo_it == *hi_it;

    out.image = resize_bilinear(slice, height, width, target_size, target_size);
    if (out.constant) {
        std::fill(out.image.flat().begin(), out.image.flat().end(), 0.0f);
    } else {
        const auto [mn, mx] = std::minmax_element(out.image.flat().begin(), out.image.flat().end());
        const double lo = *mn, range = static_cast<double>(*mx) - lo;
        for (auto& v : out.image.flat()) v = static_cast<float>(std::clamp((v - lo) / (range + 1e-8), 0.0, 1.0));
    }

    if (label) {
        out.label = resize_nearest(*label, height, width, target_size, target_size);
        for (auto v : out.label->flat()) {
            if (v >= class_count) {
                throw InvalidInput("preprocess_slice: label value " + std::to_string(v) + " >= class count " +
                                   std::to_string(class_count));
            }
        }
    }
    return out;
}

// ---------------------------------------------------------------- augmentation

AugmentDraw draw_augmentation(std::mt19937_64& rng, const AugmentOptions& options) {
    AugmentDraw d;
    if (!options.enabled) return d;
    std::bernoulli_distribution coin(0.5);
    d.flip_horizontal = coin(rng);
    d.flip_vertical = coin(rng);
    if (options.free_rotation) {
        d.angle_deg = std::uniform_real_distribution<double>(-180.0, 180.0)(rng);
    } else {
        d.quarter_turns = std::uniform_int_distribution<int>(0, 3)(rng);
    }
    return d;
}

namespace {

template <class T>
void remap(Tensor3<T>& t, const AugmentDraw& d) {
    const int n = t.height();
    Tensor3<T> out(t.channels(), n, n);
    for (int c = 0; c < t.channels(); ++c) {
        for (int y = 0; y < n; ++y) {
            for (int x = 0; x < n; ++x) {
                // Undo the rotation, then the flips, to find the source pixel.
                int sy = y, sx = x;
                for (int k = 0; k < d.quarter_turns; ++k) {
                    const int ty = sx, tx = n - 1 - sy;
                    sy = ty;
                    sx = tx;
                }
                if (d.flip_vertical) sy = n - 1 - sy;
                if (d.flip_horizontal) sx = n - 1 - sx;
                out(c, y, x) = t(c, sy, sx);
            }
        }
    }
    t = std::move(out);
}

// Rotation about the image centre by angle_deg; bilinear for images, nearest for labels, zero fill.
template <class T>
void rotate_free(Tensor3<T>& t, double angle_deg, bool nearest) {
    const int n = t.height();
    const double a = angle_deg * M_PI / 180.0, ca = std::cos(a), sa = std::sin(a);
    const double centre = (n - 1) / 2.0;
    Tensor3<T> out(t.channels(), n, n);
    for (int y = 0; y < n; ++y) {
        for (int x = 0; x < n; ++x) {
            const double dy = y - centre, dx = x - centre;
            const double sy = ca * dy + sa * dx + centre;
            const double sx = -sa * dy + ca * dx + centre;
            for (int c = 0; c < t.channels(); ++c) {
                if (nearest) {
                    const int iy = static_cast<int>(std::lround(sy)), ix = static_cast<int>(std::lround(sx));
                    if (iy >= 0 && iy < n && ix >= 0 && ix < n) out(c, y, x) = t(c, iy, ix);
                } else {
                    const int y0 = static_cast<int>(std::floor(sy)), x0 = static_cast<int>(std::floor(sx));
                    const double fy = sy - y0, fx = sx - x0;
                    double acc = 0.0;
                    for (int k = 0; k < 4; ++k) {
                        const int yy = y0 + k / 2, xx = x0 + k % 2;
                        if (yy < 0 || yy >= n || xx < 0 || xx >= n) continue;
                        acc += (k / 2 ? fy : 1.0 - fy) * (k % 2 ? fx : 1.0 - fx) * t(c, yy, xx);
                    }
                    out(c, y, x) = static_cast<T>(acc);
                }
            }
        }
    }
    t = std::move(out);
}

}  // namespace

void apply_augmentation(const AugmentDraw& draw, Tensor3<float>& image, Tensor3<std::uint8_t>* label) {
    if (image.height() != image.width()) throw InvalidInput("augment: image must be square");
    if (label && !label->same_plane(image)) throw InvalidInput("augment: label and image differ in size");
    remap(image, draw);
    if (label) remap(*label, draw);
    if (draw.angle_deg != 0.0) {
        rotate_free(image, draw.angle_deg, false);
        if (label) rotate_free(*label, draw.angle_deg, true);
    }
}

void augment(Tensor3<float>& image, Tensor3<std::uint8_t>* label, std::mt19937_64& rng,
             const AugmentOptions& options) {
    apply_augmentation(draw_augmentation(rng, options), image, label);
}

}  // namespace scp
