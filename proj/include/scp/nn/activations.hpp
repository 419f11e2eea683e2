#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "scp/tensor.hpp"

namespace scp::nn {

// Batched activations in channel-major layout C×N×H×W, so a convolution is one GEMM
// over all samples and channel concatenation is an append.
template <class T>
struct Activations {
    int channels = 0;
    int batch = 0;
    int height = 0;
    int width = 0;
    std::vector<T> data;

    Activations() = default;
    Activations(int c, int n, int h, int w, T fill = T{}) : channels(c), batch(n), height(h), width(w) {
        data.assign(static_cast<std::size_t>(c) * n * h * w, fill);
    }

    std::size_t plane() const { return static_cast<std::size_t>(height) * width; }
    std::size_t row_size() const { return static_cast<std::size_t>(batch) * plane(); }  // one channel, all samples

    T* channel(int c) { return data.data() + c * row_size(); }
    const T* channel(int c) const { return data.data() + c * row_size(); }
    T* sample_plane(int c, int n) { return channel(c) + n * plane(); }
    const T* sample_plane(int c, int n) const { return channel(c) + n * plane(); }

    bool same_shape(const Activations& o) const {
        return channels == o.channels && batch == o.batch && height == o.height && width == o.width;
    }
    std::string shape_string() const {
        return std::to_string(channels) + "x" + std::to_string(batch) + "x" + std::to_string(height) + "x" +
               std::to_string(width);
    }
};

// Copies sample n out as a C×H×W tensor.
template <class To, class T>
Tensor3<To> extract_sample(const Activations<T>& a, int n) {
    Tensor3<To> out(a.channels, a.height, a.width);
    for (int c = 0; c < a.channels; ++c) {
        const T* src = a.sample_plane(c, n);
        auto dst = out.channel(c);
        for (std::size_t i = 0; i < a.plane(); ++i) dst[i] = static_cast<To>(src[i]);
    }
    return out;
}

template <class T, class From>
void insert_sample(Activations<T>& a, int n, const Tensor3<From>& src) {
    if (src.channels() != a.channels || src.height() != a.height || src.width() != a.width) {
        throw InvalidInput("insert_sample: shape " + src.shape_string() + " does not fit " + a.shape_string());
    }
    for (int c = 0; c < a.channels; ++c) {
        T* dst = a.sample_plane(c, n);
        auto s = src.channel(c);
        for (std::size_t i = 0; i < a.plane(); ++i) dst[i] = static_cast<T>(s[i]);
    }
}

}  // namespace scp::nn
