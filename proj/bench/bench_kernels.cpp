#include <benchmark/benchmark.h>

#include <random>

#include "../tests/reference/reference.hpp"
#include "scp/nn/layers.hpp"
#include "scp/prototype.hpp"
#include "scp/uncertainty.hpp"

using namespace scp;

namespace {

Tensor3<double> random_tensor(std::mt19937_64& rng, int c, int h, int w) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    Tensor3<double> t(c, h, w);
    for (auto& v : t.flat()) v = u(rng);
    return t;
}

struct Batch {
    std::vector<ProbabilityMap> probs;
    std::vector<FeatureMap> feats;
};

Batch make_batch(int b, int c, int d, int n) {
    std::mt19937_64 rng(1);
    Batch out;
    for (int k = 0; k < b; ++k) {
        out.probs.push_back(class_softmax(random_tensor(rng, c, n, n)));
        out.feats.push_back(FeatureMap{random_tensor(rng, d, n, n)});
    }
    return out;
}

BinaryVolume random_mask(std::mt19937_64& rng, int n, double density) {
    std::bernoulli_distribution on(density);
    BinaryVolume m({n, n, n});
    for (auto& v : m.voxels) v = on(rng);
    return m;
}

void BM_prototypes(benchmark::State& state) {
    const auto batch = make_batch(1, 2, 32, static_cast<int>(state.range(0)));
    for (auto _ : state) benchmark::DoNotOptimize(compute_prototypes(batch.probs[0], batch.feats[0]));
}

void BM_prototypes_serial(benchmark::State& state) {
    const auto batch = make_batch(1, 2, 32, static_cast<int>(state.range(0)));
    for (auto _ : state) benchmark::DoNotOptimize(ref::prototypes(batch.probs[0].values, batch.feats[0].values));
}

void BM_cosine(benchmark::State& state) {
    const auto batch = make_batch(1, 2, 32, static_cast<int>(state.range(0)));
    const auto protos = compute_prototypes(batch.probs[0], batch.feats[0]);
    for (auto _ : state) benchmark::DoNotOptimize(cosine_similarity_map(batch.feats[0], protos));
}

void BM_cosine_serial(benchmark::State& state) {
    const auto batch = make_batch(1, 2, 32, static_cast<int>(state.range(0)));
    const auto q = ref::prototypes(batch.probs[0].values, batch.feats[0].values);
    for (auto _ : state) benchmark::DoNotOptimize(ref::cosine(batch.feats[0].values, q));
}

void BM_cross_sample(benchmark::State& state) {
    const auto batch = make_batch(8, 2, 32, static_cast<int>(state.range(0)));
    const auto protos = compute_batch_prototypes(batch.probs, batch.feats);
    const auto stack = build_similarity_stack(batch.feats[0], protos, 0);
    for (auto _ : state) {
        benchmark::DoNotOptimize(cross_sample_prediction(stack));
        benchmark::DoNotOptimize(vote_probability(stack));
    }
}

void BM_cross_sample_serial(benchmark::State& state) {
    const auto batch = make_batch(8, 2, 32, static_cast<int>(state.range(0)));
    const auto protos = compute_batch_prototypes(batch.probs, batch.feats);
    const auto stack = build_similarity_stack(batch.feats[0], protos, 0);
    for (auto _ : state) {
        benchmark::DoNotOptimize(ref::cross_sample(stack.maps, 0));
        benchmark::DoNotOptimize(ref::votes(stack.maps));
    }
}

void BM_conv3x3(benchmark::State& state) {
    const int n = static_cast<int>(state.range(0));
    std::mt19937_64 rng(2);
    nn::Conv2d<double> conv("c", 16, 16, 3);
    conv.init(rng);
    nn::Activations<double> x(16, 2, n, n);
    std::uniform_real_distribution<double> u(-1, 1);
    for (auto& v : x.data) v = u(rng);
    for (auto _ : state) benchmark::DoNotOptimize(conv.forward(x, false));
}

void BM_conv3x3_serial(benchmark::State& state) {
    const int n = static_cast<int>(state.range(0));
    std::mt19937_64 rng(2);
    nn::Conv2d<double> conv("c", 16, 16, 3);
    conv.init(rng);
    nn::Activations<double> x(16, 2, n, n);
    std::uniform_real_distribution<double> u(-1, 1);
    for (auto& v : x.data) v = u(rng);
    for (auto _ : state) {
        benchmark::DoNotOptimize(
            ref::conv2d(x.data, 16, 2, n, n, conv.weight().value, conv.bias().value, 16, 3));
    }
}

void BM_assd(benchmark::State& state) {
    std::mt19937_64 rng(3);
    const int n = static_cast<int>(state.range(0));
    const auto a = random_mask(rng, n, 0.3), b = random_mask(rng, n, 0.3);
    for (auto _ : state) benchmark::DoNotOptimize(assd(a, b, {2.0, 1.0, 1.0}));
}

void BM_assd_serial(benchmark::State& state) {
    std::mt19937_64 rng(3);
    const int n = static_cast<int>(state.range(0));
    const auto a = random_mask(rng, n, 0.3), b = random_mask(rng, n, 0.3);
    for (auto _ : state) benchmark::DoNotOptimize(ref::assd(a, b, {2.0, 1.0, 1.0}));
}

}  // namespace

BENCHMARK(BM_prototypes)->Arg(64)->Arg(128);
BENCHMARK(BM_prototypes_serial)->Arg(64)->Arg(128);
BENCHMARK(BM_cosine)->Arg(64)->Arg(128);
BENCHMARK(BM_cosine_serial)->Arg(64)->Arg(128);
BENCHMARK(BM_cross_sample)->Arg(64);
BENCHMARK(BM_cross_sample_serial)->Arg(64);
BENCHMARK(BM_conv3x3)->Arg(32)->Arg(64);
BENCHMARK(BM_conv3x3_serial)->Arg(32)->Arg(64);
BENCHMARK(BM_assd)->Arg(12)->Arg(20);
BENCHMARK(BM_assd_serial)->Arg(12)->Arg(20);

BENCHMARK_MAIN();
