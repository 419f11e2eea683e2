#include "scp/nn/layers.hpp"

#include <cmath>

#include "scp/error.hpp"
#include "scp/nn/blas.hpp"

namespace scp::nn {

// ---------------------------------------------------------------- im2col

template <class T>
void im2col3x3(const Activations<T>& x, std::vector<T>& cols) {
    const int h = x.height, w = x.width, n = x.batch;
    const std::size_t row = x.row_size();
    const int rows = x.channels * 9;
    cols.resize(static_cast<std::size_t>(rows) * row);

#pragma omp parallel for schedule(static)
    for (int r = 0; r < rows; ++r) {
        const int ci = r / 9;
        const int ky = (r % 9) / 3 - 1;
        const int kx = r % 3 - 1;
        T* dst = cols.data() + static_cast<std::size_t>(r) * row;
        for (int s = 0; s < n; ++s) {
            const T* src = x.sample_plane(ci, s);
            T* out = dst + s * x.plane();
            for (int y = 0; y < h; ++y) {
                const int ys = y + ky;
                T* out_row = out + y * w;
                if (ys < 0 || ys >= h) {
                    std::fill(out_row, out_row + w, T{});
                    continue;
                }
                const T* src_row = src + ys * w;
                for (int xo = 0; xo < w; ++xo) {
                    const int xs = xo + kx;
                    out_row[xo] = (xs >= 0 && xs < w) ? src_row[xs] : T{};
                }
            }
        }
    }
}

template <class T>
void col2im3x3(const std::vector<T>& cols, Activations<T>& grad_x) {
    const int h = grad_x.height, w = grad_x.width, n = grad_x.batch;
    const std::size_t row = grad_x.row_size();

#pragma omp parallel for schedule(static)
    for (int ci = 0; ci < grad_x.channels; ++ci) {
        for (int k = 0; k < 9; ++k) {
            const int ky = k / 3 - 1;
            const int kx = k % 3 - 1;
            const T* src = cols.data() + static_cast<std::size_t>(ci * 9 + k) * row;
            for (int s = 0; s < n; ++s) {
                T* dst = grad_x.sample_plane(ci, s);
                const T* in = src + s * grad_x.plane();
                for (int y = 0; y < h; ++y) {
                    const int ys = y + ky;
                    if (ys < 0 || ys >= h) continue;
                    T* dst_row = dst + ys * w;
                    const T* in_row = in + y * w;
                    for (int xo = 0; xo < w; ++xo) {
                        const int xs = xo + kx;
                        if (xs >= 0 && xs < w) dst_row[xs] += in_row[xo];
                    }
                }
            }
        }
    }
}

// ---------------------------------------------------------------- Conv2d

template <class T>
Conv2d<T>::Conv2d(std::string name, int in_channels, int out_channels, int kernel)
    : in_(in_channels), out_(out_channels), kernel_(kernel) {
    if (kernel != 1 && kernel != 3) throw InvalidInput("Conv2d: only 1x1 and 3x3 kernels are supported");
    const std::size_t n = static_cast<std::size_t>(out_) * in_ * kernel * kernel;
    weight_ = {name + ".weight", std::vector<T>(n), std::vector<T>(n)};
    bias_ = {name + ".bias", std::vector<T>(out_), std::vector<T>(out_)};
}

template <class T>
void Conv2d<T>::init(std::mt19937_64& rng) {
    // Kaiming-normal, fan-in, leaky-ReLU gain.
    const double fan_in = static_cast<double>(in_) * kernel_ * kernel_;
    const double gain = std::sqrt(2.0 / (1.0 + LeakyRelu<T>::kSlope * LeakyRelu<T>::kSlope));
    std::normal_distribution<double> dist(0.0, gain / std::sqrt(fan_in));
    for (auto& v : weight_.value) v = static_cast<T>(dist(rng));
    std::fill(bias_.value.begin(), bias_.value.end(), T{});
}

template <class T>
Activations<T> Conv2d<T>::forward(const Activations<T>& x, bool keep_for_backward) {
    if (x.channels != in_) {
        throw InvalidInput(weight_.name + ": expected " + std::to_string(in_) + " input channels, got " +
                           std::to_string(x.channels));
    }
    const int cols = static_cast<int>(x.row_size());
    const int inner = in_ * kernel_ * kernel_;
    Activations<T> y(out_, x.batch, x.height, x.width);

    std::vector<T> scratch;
    const T* rhs = x.data.data();
    if (kernel_ == 3) {
        auto& buf = keep_for_backward ? cols_ : scratch;
        im2col3x3(x, buf);
        rhs = buf.data();
    } else if (keep_for_backward) {
        cols_ = x.data;
    }
    gemm(false, false, out_, cols, inner, T{1}, weight_.value.data(), inner, rhs, cols, T{0}, y.data.data(), cols);

#pragma omp parallel for schedule(static)
    for (int c = 0; c < out_; ++c) {
        T* row = y.channel(c);
        const T b = bias_.value[c];
        for (int i = 0; i < cols; ++i) row[i] += b;
    }
    batch_ = x.batch;
    height_ = x.height;
    width_ = x.width;
    return y;
}

template <class T>
Activations<T> Conv2d<T>::backward(const Activations<T>& grad_out) {
    const int cols = static_cast<int>(grad_out.row_size());
    const int inner = in_ * kernel_ * kernel_;
    if (cols_.size() != static_cast<std::size_t>(inner) * cols) {
        throw InvalidInput(weight_.name + ": backward called without a matching training forward pass");
    }
    gemm(false, true, out_, inner, cols, T{1}, grad_out.data.data(), cols, cols_.data(), cols, T{1},
         weight_.grad.data(), inner);
    for (int c = 0; c < out_; ++c) {
        const T* row = grad_out.channel(c);
        T acc{};
        for (int i = 0; i < cols; ++i) acc += row[i];
        bias_.grad[c] += acc;
    }

    Activations<T> grad_x(in_, batch_, height_, width_);
    if (kernel_ == 3) {
        std::vector<T> dcols(static_cast<std::size_t>(inner) * cols);
        gemm(true, false, inner, cols, out_, T{1}, weight_.value.data(), inner, grad_out.data.data(), cols, T{0},
             dcols.data(), cols);
        col2im3x3(dcols, grad_x);
    } else {
        gemm(true, false, inner, cols, out_, T{1}, weight_.value.data(), inner, grad_out.data.data(), cols, T{0},
             grad_x.data.data(), cols);
    }
    return grad_x;
}

// ---------------------------------------------------------------- BatchNorm2d

template <class T>
BatchNorm2d<T>::BatchNorm2d(std::string name, int channels) : name_(std::move(name)), channels_(channels) {
    gamma_ = {name_ + ".weight", std::vector<T>(channels, T{1}), std::vector<T>(channels)};
    beta_ = {name_ + ".bias", std::vector<T>(channels, T{0}), std::vector<T>(channels)};
    running_mean_.assign(channels, T{0});
    running_var_.assign(channels, T{1});
}

template <class T>
void BatchNorm2d<T>::collect_buffers(std::vector<Buffer<T>>& out) {
    out.push_back({name_ + ".running_mean", &running_mean_});
    out.push_back({name_ + ".running_var", &running_var_});
}

template <class T>
Activations<T> BatchNorm2d<T>::forward(const Activations<T>& x, bool training) {
    if (x.channels != channels_) throw InvalidInput(name_ + ": channel mismatch");
    Activations<T> y(x.channels, x.batch, x.height, x.width);
    const std::size_t m = x.row_size();
    if (training) {
        normalized_.resize(x.data.size());
        inv_std_.resize(channels_);
    }

#pragma omp parallel for schedule(static)
    for (int c = 0; c < channels_; ++c) {
        const T* src = x.channel(c);
        T* dst = y.channel(c);
        double mean, inv_std;
        if (training) {
            double sum = 0.0;
            for (std::size_t i = 0; i < m; ++i) sum += src[i];
            mean = sum / m;
            double sq = 0.0;
            for (std::size_t i = 0; i < m; ++i) {
                const double d = src[i] - mean;
                sq += d * d;
            }
            const double var = sq / m;
            inv_std = 1.0 / std::sqrt(var + kEps);
            const double unbiased = m > 1 ? var * m / (m - 1) : var;
            running_mean_[c] = static_cast<T>((1.0 - kMomentum) * running_mean_[c] + kMomentum * mean);
            running_var_[c] = static_cast<T>((1.0 - kMomentum) * running_var_[c] + kMomentum * unbiased);
            inv_std_[c] = static_cast<T>(inv_std);
        } else {
            mean = running_mean_[c];
            inv_std = 1.0 / std::sqrt(static_cast<double>(running_var_[c]) + kEps);
        }
        const T g = gamma_.value[c], b = beta_.value[c];
        T* norm = training ? normalized_.data() + c * m : nullptr;
        for (std::size_t i = 0; i < m; ++i) {
            const T xh = static_cast<T>((src[i] - mean) * inv_std);
            if (norm) norm[i] = xh;
            dst[i] = g * xh + b;
        }
    }
    return y;
}

template <class T>
Activations<T> BatchNorm2d<T>::backward(const Activations<T>& grad_out) {
    if (normalized_.size() != grad_out.data.size()) {
        throw InvalidInput(name_ + ": backward called without a matching training forward pass");
    }
    Activations<T> grad_x(grad_out.channels, grad_out.batch, grad_out.height, grad_out.width);
    const std::size_t m = grad_out.row_size();

#pragma omp parallel for schedule(static)
    for (int c = 0; c < channels_; ++c) {
        const T* dy = grad_out.channel(c);
        const T* xh = normalized_.data() + c * m;
        double sum_dy = 0.0, sum_dy_xh = 0.0;
        for (std::size_t i = 0; i < m; ++i) {
            sum_dy += dy[i];
            sum_dy_xh += static_cast<double>(dy[i]) * xh[i];
        }
        gamma_.grad[c] += static_cast<T>(sum_dy_xh);
        beta_.grad[c] += static_cast<T>(sum_dy);
        const double scale = static_cast<double>(gamma_.value[c]) * inv_std_[c] / static_cast<double>(m);
        T* dx = grad_x.channel(c);
        for (std::size_t i = 0; i < m; ++i) {
            dx[i] = static_cast<T>(scale * (static_cast<double>(m) * dy[i] - sum_dy - xh[i] * sum_dy_xh));
        }
    }
    return grad_x;
}

// ---------------------------------------------------------------- LeakyRelu

template <class T>
Activations<T> LeakyRelu<T>::forward(const Activations<T>& x, bool keep_for_backward) {
    Activations<T> y = x;
    const std::size_t n = y.data.size();
    if (keep_for_backward) positive_.resize(n);
    const T slope = static_cast<T>(kSlope);
#pragma omp parallel for schedule(static)
    for (std::size_t i = 0; i < n; ++i) {
        const bool pos = y.data[i] > T{0};
        if (!pos) y.data[i] *= slope;
        if (keep_for_backward) positive_[i] = pos;
    }
    return y;
}

template <class T>
Activations<T> LeakyRelu<T>::backward(const Activations<T>& grad_out) const {
    Activations<T> g = grad_out;
    const T slope = static_cast<T>(kSlope);
    const std::size_t n = g.data.size();
#pragma omp parallel for schedule(static)
    for (std::size_t i = 0; i < n; ++i) {
        if (!positive_[i]) g.data[i] *= slope;
    }
    return g;
}

// ---------------------------------------------------------------- MaxPool2x2

template <class T>
Activations<T> MaxPool2x2<T>::forward(const Activations<T>& x, bool keep_for_backward) {
    if (x.height % 2 != 0 || x.width % 2 != 0) throw InvalidInput("MaxPool2x2: spatial size must be even");
    const int oh = x.height / 2, ow = x.width / 2;
    Activations<T> y(x.channels, x.batch, oh, ow);
    if (keep_for_backward) argmax_.resize(y.data.size());
    in_height_ = x.height;
    in_width_ = x.width;
    const int planes = x.channels * x.batch;

#pragma omp parallel for schedule(static)
    for (int p = 0; p < planes; ++p) {
        const T* src = x.data.data() + p * x.plane();
        T* dst = y.data.data() + p * y.plane();
        std::uint32_t* arg = keep_for_backward ? argmax_.data() + p * y.plane() : nullptr;
        for (int yo = 0; yo < oh; ++yo) {
            for (int xo = 0; xo < ow; ++xo) {
                std::uint32_t best = (2 * yo) * x.width + 2 * xo;
                const std::uint32_t cand[3] = {best + 1, best + static_cast<std::uint32_t>(x.width),
                                               best + static_cast<std::uint32_t>(x.width) + 1};
                for (auto c : cand) {
                    if (src[c] > src[best]) best = c;
                }
                dst[yo * ow + xo] = src[best];
                if (arg) arg[yo * ow + xo] = best;
            }
        }
    }
    return y;
}

template <class T>
Activations<T> MaxPool2x2<T>::backward(const Activations<T>& grad_out) const {
    Activations<T> g(grad_out.channels, grad_out.batch, in_height_, in_width_);
    const int planes = grad_out.channels * grad_out.batch;
#pragma omp parallel for schedule(static)
    for (int p = 0; p < planes; ++p) {
        const T* src = grad_out.data.data() + p * grad_out.plane();
        const std::uint32_t* arg = argmax_.data() + p * grad_out.plane();
        T* dst = g.data.data() + p * g.plane();
        for (std::size_t i = 0; i < grad_out.plane(); ++i) dst[arg[i]] += src[i];
    }
    return g;
}

// ---------------------------------------------------------------- upsampling / concat

namespace {

struct Tap {
    int lo, hi;
    double frac;
};

std::vector<Tap> align_corner_taps(int in, int out) {
    std::vector<Tap> taps(out);
    for (int o = 0; o < out; ++o) {
        const double src = (out > 1 && in > 1) ? static_cast<double>(o) * (in - 1) / (out - 1) : 0.0;
        const int lo = static_cast<int>(std::floor(src));
        taps[o] = {lo, std::min(lo + 1, in - 1), src - lo};
    }
    return taps;
}

}  // namespace

template <class T>
Activations<T> upsample_bilinear2x(const Activations<T>& x) {
    const int oh = 2 * x.height, ow = 2 * x.width;
    Activations<T> y(x.channels, x.batch, oh, ow);
    const auto ty = align_corner_taps(x.height, oh);
    const auto tx = align_corner_taps(x.width, ow);
    const int planes = x.channels * x.batch;

#pragma omp parallel for schedule(static)
    for (int p = 0; p < planes; ++p) {
        const T* src = x.data.data() + p * x.plane();
        T* dst = y.data.data() + p * y.plane();
        for (int yo = 0; yo < oh; ++yo) {
            const auto& a = ty[yo];
            for (int xo = 0; xo < ow; ++xo) {
                const auto& b = tx[xo];
                const double top = src[a.lo * x.width + b.lo] * (1.0 - b.frac) + src[a.lo * x.width + b.hi] * b.frac;
                const double bot = src[a.hi * x.width + b.lo] * (1.0 - b.frac) + src[a.hi * x.width + b.hi] * b.frac;
                dst[yo * ow + xo] = static_cast<T>(top * (1.0 - a.frac) + bot * a.frac);
            }
        }
    }
    return y;
}

template <class T>
Activations<T> upsample_bilinear2x_backward(const Activations<T>& grad_out, int in_height, int in_width) {
    Activations<T> g(grad_out.channels, grad_out.batch, in_height, in_width);
    const int oh = grad_out.height, ow = grad_out.width;
    const auto ty = align_corner_taps(in_height, oh);
    const auto tx = align_corner_taps(in_width, ow);
    const int planes = grad_out.channels * grad_out.batch;

#pragma omp parallel for schedule(static)
    for (int p = 0; p < planes; ++p) {
        const T* src = grad_out.data.data() + p * grad_out.plane();
        T* dst = g.data.data() + p * g.plane();
        for (int yo = 0; yo < oh; ++yo) {
            const auto& a = ty[yo];
            for (int xo = 0; xo < ow; ++xo) {
                const auto& b = tx[xo];
                const double v = src[yo * ow + xo];
                dst[a.lo * in_width + b.lo] += static_cast<T>(v * (1.0 - a.frac) * (1.0 - b.frac));
                dst[a.lo * in_width + b.hi] += static_cast<T>(v * (1.0 - a.frac) * b.frac);
                dst[a.hi * in_width + b.lo] += static_cast<T>(v * a.frac * (1.0 - b.frac));
                dst[a.hi * in_width + b.hi] += static_cast<T>(v * a.frac * b.frac);
            }
        }
    }
    return g;
}

template <class T>
Activations<T> concat_channels(const Activations<T>& a, const Activations<T>& b) {
    if (a.batch != b.batch || a.height != b.height || a.width != b.width) {
        throw InvalidInput("concat_channels: " + a.shape_string() + " vs " + b.shape_string());
    }
    Activations<T> out;
    out.channels = a.channels + b.channels;
    out.batch = a.batch;
    out.height = a.height;
    out.width = a.width;
    out.data.reserve(a.data.size() + b.data.size());
    out.data.insert(out.data.end(), a.data.begin(), a.data.end());
    out.data.insert(out.data.end(), b.data.begin(), b.data.end());
    return out;
}

// ---------------------------------------------------------------- ConvBlock

template <class T>
ConvBlock<T>::ConvBlock(const std::string& name, int in_channels, int out_channels)
    : conv1_(name + ".conv1", in_channels, out_channels, 3),
      bn1_(name + ".bn1", out_channels),
      conv2_(name + ".conv2", out_channels, out_channels, 3),
      bn2_(name + ".bn2", out_channels) {}

template <class T>
void ConvBlock<T>::init(std::mt19937_64& rng) {
    conv1_.init(rng);
    conv2_.init(rng);
}

template <class T>
Activations<T> ConvBlock<T>::forward(const Activations<T>& x, bool training) {
    auto h = act1_.forward(bn1_.forward(conv1_.forward(x, training), training), training);
    return act2_.forward(bn2_.forward(conv2_.forward(h, training), training), training);
}

template <class T>
Activations<T> ConvBlock<T>::backward(const Activations<T>& grad_out) {
    auto g = conv2_.backward(bn2_.backward(act2_.backward(grad_out)));
    return conv1_.backward(bn1_.backward(act1_.backward(g)));
}

template <class T>
void ConvBlock<T>::collect(std::vector<Param<T>*>& out) {
    conv1_.collect(out);
    bn1_.collect(out);
    conv2_.collect(out);
    bn2_.collect(out);
}

template <class T>
void ConvBlock<T>::collect_buffers(std::vector<Buffer<T>>& out) {
    bn1_.collect_buffers(out);
    bn2_.collect_buffers(out);
}

#define SCP_INSTANTIATE_LAYERS(T)                                                                     \
    template void im2col3x3<T>(const Activations<T>&, std::vector<T>&);                              \
    template void col2im3x3<T>(const std::vector<T>&, Activations<T>&);                              \
    template class Conv2d<T>;                                                                         \
    template class BatchNorm2d<T>;                                                                    \
    template class LeakyRelu<T>;                                                                      \
    template class MaxPool2x2<T>;                                                                     \
    template class ConvBlock<T>;                                                                      \
    template Activations<T> upsample_bilinear2x<T>(const Activations<T>&);                           \
    template Activations<T> upsample_bilinear2x_backward<T>(const Activations<T>&, int, int);        \
    template Activations<T> concat_channels<T>(const Activations<T>&, const Activations<T>&);

SCP_INSTANTIATE_LAYERS(float)
SCP_INSTANTIATE_LAYERS(double)

}  // namespace scp::nn
