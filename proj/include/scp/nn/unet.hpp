#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "scp/core.hpp"
#include "scp/nn/layers.hpp"

namespace scp::nn {

// Where the prototype feature map is taken from.
enum class FeatureTap {
    Final,        // last decoder block, full resolution
    Penultimate,  // second-to-last decoder block, bilinearly upsampled to full resolution
};

struct UNetConfig {
    int in_channels = 1;
    int classes = 2;
    int base_width = 16;
    FeatureTap tap = FeatureTap::Final;
    std::uint64_t seed = 0;

    static constexpr int kDepth = 4;           // pooling stages
    static constexpr int kSpatialMultiple = 16;

    int embed_dim() const { return tap == FeatureTap::Final ? base_width : 2 * base_width; }
};

template <class T>
struct BatchOutput {
    Activations<T> logits;  // classes × N × H × W
    Activations<T> feat;    // embed_dim × N × H × W, detached
};

// Per-sample view of a forward pass.
struct ModelOutput {
    Tensor3<double> logits;
    ProbabilityMap prob;
    FeatureMap feat;
};

// Four-level U-Net: conv blocks with batch norm, max pooling down, 1×1 conv + bilinear
// upsampling + skip concatenation up, and a 1×1 classification head.
template <class T>
class UNet {
public:
    explicit UNet(const UNetConfig& config);
    UNet(const UNet&) = delete;
    UNet& operator=(const UNet&) = delete;
    UNet(UNet&&) noexcept;
    UNet& operator=(UNet&&) noexcept;
    ~UNet();

    const UNetConfig& config() const { return config_; }

    // Input is 1×N×H×W with H and W multiples of 16.
    BatchOutput<T> forward(const Activations<T>& images, bool training);
    // Backpropagates a logits gradient from the last training forward pass, accumulating parameter grads.
    void backward(const Activations<T>& grad_logits);

    std::vector<Param<T>*> parameters();
    std::vector<Buffer<T>> buffers();
    void zero_grad();
    std::size_t parameter_count();

private:
    struct Impl;
    UNetConfig config_;
    std::unique_ptr<Impl> impl_;
};

// Runs one image (1×H×W) through the model in evaluation mode.
ModelOutput forward_single(UNet<float>& model, const Tensor3<float>& image);

// Packs images (each 1×H×W) into a 1×N×H×W batch.
template <class T>
Activations<T> pack_images(const std::vector<const Tensor3<float>*>& images);

void check_spatial_size(int height, int width);

}  // namespace scp::nn
