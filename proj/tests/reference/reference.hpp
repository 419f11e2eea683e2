#pragma once

// Serial, loop-by-loop reference implementations. They share no code with the library
// kernels beyond the tensor container, and serve as oracles in tests and baselines in benchmarks.

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <optional>
#include <vector>

#include "scp/metrics.hpp"
#include "scp/prototype.hpp"

namespace scp::ref {

// prototypes[c][d] = sum_i p_c(i) f_d(i) / (sum_i p_c(i) + 1e-8)
inline std::vector<std::vector<double>> prototypes(const Tensor3<double>& prob, const Tensor3<double>& feat) {
    const int C = prob.channels(), D = feat.channels(), H = prob.height(), W = prob.width();
    std::vector<std::vector<double>> q(C, std::vector<double>(D, 0.0));
    for (int c = 0; c < C; ++c) {
        double mass = 0.0;
        for (int y = 0; y < H; ++y)
            for (int x = 0; x < W; ++x) mass += prob(c, y, x);
        for (int d = 0; d < D; ++d) {
            double acc = 0.0;
            for (int y = 0; y < H; ++y)
                for (int x = 0; x < W; ++x) acc += prob(c, y, x) * feat(d, y, x);
            q[c][d] = acc / (mass + 1e-8);
        }
    }
    return q;
}

inline Tensor3<double> cosine(const Tensor3<double>& feat, const std::vector<std::vector<double>>& q) {
    const int C = static_cast<int>(q.size()), D = feat.channels(), H = feat.height(), W = feat.width();
    Tensor3<double> out(C, H, W);
    for (int c = 0; c < C; ++c) {
        double qn = 0.0;
        for (int d = 0; d < D; ++d) qn += q[c][d] * q[c][d];
        qn = std::sqrt(qn);
        for (int y = 0; y < H; ++y) {
            for (int x = 0; x < W; ++x) {
                double dot = 0.0, fn = 0.0;
                for (int d = 0; d < D; ++d) {
                    dot += feat(d, y, x) * q[c][d];
                    fn += feat(d, y, x) * feat(d, y, x);
                }
                const double s = dot / (std::sqrt(fn) * qn + 1e-8);
                out(c, y, x) = std::max(-1.0, std::min(1.0, s));
            }
        }
    }
    return out;
}

inline Tensor3<double> softmax(const Tensor3<double>& s) {
    Tensor3<double> out(s.channels(), s.height(), s.width());
    for (int y = 0; y < s.height(); ++y) {
        for (int x = 0; x < s.width(); ++x) {
            double z = 0.0;
            for (int c = 0; c < s.channels(); ++c) z += std::exp(s(c, y, x));
            for (int c = 0; c < s.channels(); ++c) out(c, y, x) = std::exp(s(c, y, x)) / z;
        }
    }
    return out;
}

// sum over j != k of exp(s_j), normalized over classes.
inline Tensor3<double> cross_sample(const std::vector<Tensor3<double>>& maps, int k) {
    const auto& m0 = maps.front();
    Tensor3<double> out(m0.channels(), m0.height(), m0.width());
    for (int y = 0; y < m0.height(); ++y) {
        for (int x = 0; x < m0.width(); ++x) {
            double z = 0.0;
            for (int c = 0; c < m0.channels(); ++c) {
                double acc = 0.0;
                for (int j = 0; j < static_cast<int>(maps.size()); ++j) {
                    if (j != k) acc += std::exp(maps[j](c, y, x));
                }
                out(c, y, x) = acc;
                z += acc;
            }
            for (int c = 0; c < m0.channels(); ++c) out(c, y, x) /= z;
        }
    }
    return out;
}

// Fraction of maps whose argmax (lowest index on ties) is each class.
inline Tensor3<double> votes(const std::vector<Tensor3<double>>& maps) {
    const auto& m0 = maps.front();
    Tensor3<double> out(m0.channels(), m0.height(), m0.width());
    for (const auto& m : maps) {
        for (int y = 0; y < m.height(); ++y) {
            for (int x = 0; x < m.width(); ++x) {
                int best = 0;
                for (int c = 1; c < m.channels(); ++c) {
                    if (m(c, y, x) > m(best, y, x)) best = c;
                }
                out(best, y, x) += 1.0;
            }
        }
    }
    for (auto& v : out.flat()) v /= static_cast<double>(maps.size());
    return out;
}

inline double entropy(const std::vector<double>& p) {
    double e = 0.0;
    for (double v : p) {
        if (v > 0) e -= v * std::log(v);
    }
    return e / std::log(static_cast<double>(p.size()));
}

// Direct 2-D convolution, zero padding k/2, weights [out][in][ky][kx], input [in][n][h][w].
inline std::vector<double> conv2d(const std::vector<double>& input, int in_ch, int batch, int h, int w,
                                  const std::vector<double>& weight, const std::vector<double>& bias, int out_ch,
                                  int k) {
    std::vector<double> out(static_cast<std::size_t>(out_ch) * batch * h * w, 0.0);
    const int pad = k / 2;
    for (int o = 0; o < out_ch; ++o)
        for (int n = 0; n < batch; ++n)
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w; ++x) {
                    double acc = bias[o];
                    for (int i = 0; i < in_ch; ++i)
                        for (int ky = 0; ky < k; ++ky)
                            for (int kx = 0; kx < k; ++kx) {
                                const int yy = y + ky - pad, xx = x + kx - pad;
                                if (yy < 0 || yy >= h || xx < 0 || xx >= w) continue;
                                acc += weight[((static_cast<std::size_t>(o) * in_ch + i) * k + ky) * k + kx] *
                                       input[((static_cast<std::size_t>(i) * batch + n) * h + yy) * w + xx];
                            }
                    out[((static_cast<std::size_t>(o) * batch + n) * h + y) * w + x] = acc;
                }
    return out;
}

inline double dice(const BinaryVolume& a, const BinaryVolume& b) {
    double inter = 0, na = 0, nb = 0;
    for (std::size_t i = 0; i < a.voxels.size(); ++i) {
        inter += a.voxels[i] && b.voxels[i];
        na += a.voxels[i] != 0;
        nb += b.voxels[i] != 0;
    }
    if (na + nb == 0) return 100.0;
    return 100.0 * 2.0 * inter / (na + nb);
}

inline std::vector<std::array<int, 3>> surface(const BinaryVolume& m) {
    std::vector<std::array<int, 3>> out;
    const auto [D, H, W] = m.shape;
    auto fg = [&](int z, int y, int x) {
        return z >= 0 && z < D && y >= 0 && y < H && x >= 0 && x < W && m.at(z, y, x) != 0;
    };
    for (int z = 0; z < D; ++z)
        for (int y = 0; y < H; ++y)
            for (int x = 0; x < W; ++x) {
                if (!fg(z, y, x)) continue;
                if (!fg(z - 1, y, x) || !fg(z + 1, y, x) || !fg(z, y - 1, x) || !fg(z, y + 1, x) ||
                    !fg(z, y, x - 1) || !fg(z, y, x + 1)) {
                    out.push_back({z, y, x});
                }
            }
    return out;
}

// All-pairs surface distances: mean of the two directed average distances.
inline std::optional<double> assd(const BinaryVolume& a, const BinaryVolume& b, const Spacing& sp) {
    const auto sa = surface(a), sb = surface(b);
    if (sa.empty() || sb.empty()) return std::nullopt;
    auto directed = [&](const auto& from, const auto& to) {
        double total = 0.0;
        for (const auto& p : from) {
            double best = std::numeric_limits<double>::infinity();
            for (const auto& q : to) {
                const double dz = (p[0] - q[0]) * sp[0], dy = (p[1] - q[1]) * sp[1], dx = (p[2] - q[2]) * sp[2];
                best = std::min(best, dz * dz + dy * dy + dx * dx);
            }
            total += std::sqrt(best);
        }
        return total / static_cast<double>(from.size());
    };
    return 0.5 * (directed(sa, sb) + directed(sb, sa));
}

}  // namespace scp::ref
