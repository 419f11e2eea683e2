#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "scp/nn/activations.hpp"

namespace scp::nn {

template <class T>
struct Param {
    std::string name;
    std::vector<T> value;
    std::vector<T> grad;

    void zero_grad() { std::fill(grad.begin(), grad.end(), T{}); }
};

// Non-trainable state that is still part of a checkpoint (batch-norm running statistics).
template <class T>
struct Buffer {
    std::string name;
    std::vector<T>* value;
};

// 2-D convolution with square kernel 1 or 3, stride 1, zero "same" padding.
template <class T>
class Conv2d {
public:
    Conv2d(std::string name, int in_channels, int out_channels, int kernel);

    void init(std::mt19937_64& rng);
    Activations<T> forward(const Activations<T>& x, bool keep_for_backward);
    Activations<T> backward(const Activations<T>& grad_out);

    void collect(std::vector<Param<T>*>& out) { out.push_back(&weight_); out.push_back(&bias_); }
    int in_channels() const { return in_; }
    int out_channels() const { return out_; }
    int kernel() const { return kernel_; }
    const Param<T>& weight() const { return weight_; }
    const Param<T>& bias() const { return bias_; }
    Param<T>& weight() { return weight_; }
    Param<T>& bias() { return bias_; }

private:
    int in_;
    int out_;
    int kernel_;
    Param<T> weight_;  // out × in × k × k
    Param<T> bias_;
    std::vector<T> cols_;  // im2col of the last training input (or the input itself for 1×1)
    int batch_ = 0, height_ = 0, width_ = 0;
};

// Lays out the 3×3 neighbourhoods of x as a (C·9) × (N·H·W) matrix.
template <class T>
void im2col3x3(const Activations<T>& x, std::vector<T>& cols);
template <class T>
void col2im3x3(const std::vector<T>& cols, Activations<T>& grad_x);

template <class T>
class BatchNorm2d {
public:
    static constexpr double kEps = 1e-5;
    static constexpr double kMomentum = 0.1;

    BatchNorm2d(std::string name, int channels);

    Activations<T> forward(const Activations<T>& x, bool training);
    Activations<T> backward(const Activations<T>& grad_out);

    void collect(std::vector<Param<T>*>& out) { out.push_back(&gamma_); out.push_back(&beta_); }
    void collect_buffers(std::vector<Buffer<T>>& out);

private:
    std::string name_;
    int channels_;
    Param<T> gamma_;
    Param<T> beta_;
    std::vector<T> running_mean_;
    std::vector<T> running_var_;
    std::vector<T> normalized_;
    std::vector<T> inv_std_;
};

template <class T>
class LeakyRelu {
public:
    static constexpr double kSlope = 0.01;

    Activations<T> forward(const Activations<T>& x, bool keep_for_backward);
    Activations<T> backward(const Activations<T>& grad_out) const;

private:
    std::vector<std::uint8_t> positive_;
};

template <class T>
class MaxPool2x2 {
public:
    Activations<T> forward(const Activations<T>& x, bool keep_for_backward);
    Activations<T> backward(const Activations<T>& grad_out) const;

private:
    std::vector<std::uint32_t> argmax_;
    int in_height_ = 0, in_width_ = 0;
};

// Bilinear ×2 upsampling with aligned corners.
template <class T>
Activations<T> upsample_bilinear2x(const Activations<T>& x);
template <class T>
Activations<T> upsample_bilinear2x_backward(const Activations<T>& grad_out, int in_height, int in_width);

// [a; b] along the channel axis.
template <class T>
Activations<T> concat_channels(const Activations<T>& a, const Activations<T>& b);

// conv3×3 → BN → LeakyReLU, twice.
template <class T>
class ConvBlock {
public:
    ConvBlock(const std::string& name, int in_channels, int out_channels);

    void init(std::mt19937_64& rng);
    Activations<T> forward(const Activations<T>& x, bool training);
    Activations<T> backward(const Activations<T>& grad_out);
    void collect(std::vector<Param<T>*>& out);
    void collect_buffers(std::vector<Buffer<T>>& out);

private:
    Conv2d<T> conv1_;
    BatchNorm2d<T> bn1_;
    LeakyRelu<T> act1_;
    Conv2d<T> conv2_;
    BatchNorm2d<T> bn2_;
    LeakyRelu<T> act2_;
};

}  // namespace scp::nn
