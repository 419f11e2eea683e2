#include "scp/nn/unet.hpp"

#include <array>
#include <random>

namespace scp::nn {

void check_spatial_size(int height, int width) {
    const int m = UNetConfig::kSpatialMultiple;
    if (height <= 0 || width <= 0 || height % m != 0 || width % m != 0) {
        throw InvalidInput("UNet: input " + std::to_string(height) + "x" + std::to_string(width) +
                           " must have height and width divisible by " + std::to_string(m));
    }
}

template <class T>
struct UNet<T>::Impl {
    static constexpr int kLevels = UNetConfig::kDepth;

    std::vector<ConvBlock<T>> encoder;          // kLevels + 1 blocks
    std::array<MaxPool2x2<T>, kLevels> pools;
    std::vector<Conv2d<T>> reduce;              // 1×1 before each upsampling
    std::vector<ConvBlock<T>> decoder;
    Conv2d<T> head;

    std::array<int, kLevels> skip_channels{};
    std::array<std::array<int, 2>, kLevels> reduced_size{};

    explicit Impl(const UNetConfig& cfg) : head("head", cfg.base_width, cfg.classes, 1) {
        std::array<int, kLevels + 1> width{};
        for (int l = 0; l <= kLevels; ++l) width[l] = cfg.base_width << l;
        encoder.reserve(kLevels + 1);
        encoder.emplace_back("enc0", cfg.in_channels, width[0]);
        for (int l = 1; l <= kLevels; ++l) encoder.emplace_back("enc" + std::to_string(l), width[l - 1], width[l]);
        reduce.reserve(kLevels);
        decoder.reserve(kLevels);
        for (int i = 0; i < kLevels; ++i) {
            const int lvl = kLevels - 1 - i;
            reduce.emplace_back("dec" + std::to_string(i) + ".reduce", width[lvl + 1], width[lvl], 1);
            decoder.emplace_back("dec" + std::to_string(i) + ".block", 2 * width[lvl], width[lvl]);
            skip_channels[i] = width[lvl];
        }
    }
};

template <class T>
UNet<T>::UNet(const UNetConfig& config) : config_(config), impl_(std::make_unique<Impl>(config)) {
    if (config.classes < 2) throw InvalidInput("UNet: classes must be >= 2");
    if (config.base_width < 1) throw InvalidInput("UNet: base_width must be >= 1");
    std::mt19937_64 rng(config.seed);
    for (auto& b : impl_->encoder) b.init(rng);
    for (int i = 0; i < Impl::kLevels; ++i) {
        impl_->reduce[i].init(rng);
        impl_->decoder[i].init(rng);
    }
    impl_->head.init(rng);
}

template <class T>
UNet<T>::UNet(UNet&&) noexcept = default;
template <class T>
UNet<T>& UNet<T>::operator=(UNet&&) noexcept = default;
template <class T>
UNet<T>::~UNet() = default;

template <class T>
BatchOutput<T> UNet<T>::forward(const Activations<T>& images, bool training) {
    if (images.channels != config_.in_channels) throw InvalidInput("UNet: input channel mismatch");
    check_spatial_size(images.height, images.width);
    auto& m = *impl_;
    constexpr int L = Impl::kLevels;

    std::array<Activations<T>, L> skips;
    Activations<T> x = m.encoder[0].forward(images, training);
    for (int l = 0; l < L; ++l) {
        skips[l] = x;
        x = m.encoder[l + 1].forward(m.pools[l].forward(x, training), training);
    }

    Activations<T> penultimate;
    for (int i = 0; i < L; ++i) {
        auto reduced = m.reduce[i].forward(x, training);
        m.reduced_size[i] = {reduced.height, reduced.width};
        auto up = upsample_bilinear2x(reduced);
        x = m.decoder[i].forward(concat_channels(skips[L - 1 - i], up), training);
        if (i == L - 2 && config_.tap == FeatureTap::Penultimate) penultimate = x;
    }

    BatchOutput<T> out;
    out.logits = m.head.forward(x, training);
    out.feat = config_.tap == FeatureTap::Final ? std::move(x) : upsample_bilinear2x(penultimate);
    return out;
}

template <class T>
void UNet<T>::backward(const Activations<T>& grad_logits) {
    auto& m = *impl_;
    constexpr int L = Impl::kLevels;

    Activations<T> g = m.head.backward(grad_logits);
    std::array<Activations<T>, L> skip_grads;
    for (int i = L - 1; i >= 0; --i) {
        auto gc = m.decoder[i].backward(g);
        const int skip_c = m.skip_channels[i];
        const std::size_t split = static_cast<std::size_t>(skip_c) * gc.row_size();
        Activations<T> gskip(skip_c, gc.batch, gc.height, gc.width);
        std::copy(gc.data.begin(), gc.data.begin() + split, gskip.data.begin());
        Activations<T> gup(gc.channels - skip_c, gc.batch, gc.height, gc.width);
        std::copy(gc.data.begin() + split, gc.data.end(), gup.data.begin());
        skip_grads[L - 1 - i] = std::move(gskip);
        auto gr = upsample_bilinear2x_backward(gup, m.reduced_size[i][0], m.reduced_size[i][1]);
        g = m.reduce[i].backward(gr);
    }
    for (int l = L - 1; l >= 0; --l) {
        g = m.pools[l].backward(m.encoder[l + 1].backward(g));
        auto& s = skip_grads[l];
        for (std::size_t k = 0; k < g.data.size(); ++k) g.data[k] += s.data[k];
    }
    m.encoder[0].backward(g);
}

template <class T>
std::vector<Param<T>*> UNet<T>::parameters() {
    std::vector<Param<T>*> out;
    for (auto& b : impl_->encoder) b.collect(out);
    for (int i = 0; i < Impl::kLevels; ++i) {
        impl_->reduce[i].collect(out);
        impl_->decoder[i].collect(out);
    }
    impl_->head.collect(out);
    return out;
}

template <class T>
std::vector<Buffer<T>> UNet<T>::buffers() {
    std::vector<Buffer<T>> out;
    for (auto& b : impl_->encoder) b.collect_buffers(out);
    for (auto& b : impl_->decoder) b.collect_buffers(out);
    return out;
}

template <class T>
void UNet<T>::zero_grad() {
    for (auto* p : parameters()) p->zero_grad();
}

template <class T>
std::size_t UNet<T>::parameter_count() {
    std::size_t n = 0;
    for (auto* p : parameters()) n += p->value.size();
    return n;
}

template <class T>
Activations<T> pack_images(const std::vector<const Tensor3<float>*>& images) {
    if (images.empty()) throw InvalidInput("pack_images: empty batch");
    const auto& first = *images.front();
    Activations<T> out(first.channels(), static_cast<int>(images.size()), first.height(), first.width());
    for (std::size_t n = 0; n < images.size(); ++n) insert_sample(out, static_cast<int>(n), *images[n]);
    return out;
}

ModelOutput forward_single(UNet<float>& model, const Tensor3<float>& image) {
    auto batch = model.forward(pack_images<float>({&image}), false);
    ModelOutput out;
    out.logits = extract_sample<double>(batch.logits, 0);
    out.prob = class_softmax(out.logits);
    out.feat.values = extract_sample<double>(batch.feat, 0);
    return out;
}

template class UNet<float>;
template class UNet<double>;
template Activations<float> pack_images<float>(const std::vector<const Tensor3<float>*>&);
template Activations<double> pack_images<double>(const std::vector<const Tensor3<float>*>&);

}  // namespace scp::nn
