#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "scp/error.hpp"

namespace scp {

// Dense channel-major array laid out C×H×W (row-major within a channel).
template <class T>
class Tensor3 {
public:
    Tensor3() = default;
    Tensor3(int channels, int height, int width, T fill = T{})
        : channels_(channels), height_(height), width_(width) {
        if (channels < 0 || height < 0 || width < 0) {
            throw InvalidInput("Tensor3: negative dimension in " + shape_string());
        }
        data_.assign(static_cast<std::size_t>(channels) * height * width, fill);
    }

    int channels() const { return channels_; }
    int height() const { return height_; }
    int width() const { return width_; }
    int pixels() const { return height_ * width_; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    T& operator()(int c, int y, int x) { return data_[index(c, y, x)]; }
    const T& operator()(int c, int y, int x) const { return data_[index(c, y, x)]; }

    // Pixel-linear access: i = y*W + x.
    T& at(int c, int i) { return data_[static_cast<std::size_t>(c) * pixels() + i]; }
    const T& at(int c, int i) const { return data_[static_cast<std::size_t>(c) * pixels() + i]; }

    std::span<T> channel(int c) {
        return {data_.data() + static_cast<std::size_t>(c) * pixels(), static_cast<std::size_t>(pixels())};
    }
    std::span<const T> channel(int c) const {
        return {data_.data() + static_cast<std::size_t>(c) * pixels(), static_cast<std::size_t>(pixels())};
    }

    std::span<T> flat() { return data_; }
    std::span<const T> flat() const { return data_; }
    T* data() { return data_.data(); }
    const T* data() const { return data_.data(); }

    template <class U>
    bool same_shape(const Tensor3<U>& other) const {
        return channels_ == other.channels() && height_ == other.height() && width_ == other.width();
    }
    template <class U>
    bool same_plane(const Tensor3<U>& other) const {
        return height_ == other.height() && width_ == other.width();
    }

    std::string shape_string() const {
        return std::to_string(channels_) + "x" + std::to_string(height_) + "x" + std::to_string(width_);
    }

    bool operator==(const Tensor3&) const = default;

private:
    std::size_t index(int c, int y, int x) const {
        return (static_cast<std::size_t>(c) * height_ + y) * width_ + x;
    }

    int channels_ = 0;
    int height_ = 0;
    int width_ = 0;
    std::vector<T> data_;
};

template <class To, class From>
Tensor3<To> tensor_cast(const Tensor3<From>& src) {
    Tensor3<To> out(src.channels(), src.height(), src.width());
    auto in = src.flat();
    auto dst = out.flat();
    for (std::size_t i = 0; i < in.size(); ++i) dst[i] = static_cast<To>(in[i]);
    return out;
}

}  // namespace scp
