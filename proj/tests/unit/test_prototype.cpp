#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "../reference/reference.hpp"
#include "scp/prototype.hpp"
#include "support.hpp"

using namespace scp;
using namespace testing;

namespace {

std::vector<std::vector<double>> as_rows(const PrototypeSet& p) {
    std::vector<std::vector<double>> rows;
    for (int c = 0; c < p.class_count; ++c) rows.emplace_back(p.vector(c).begin(), p.vector(c).end());
    return rows;
}

struct RandomBatch {
    std::vector<ProbabilityMap> probs;
    std::vector<FeatureMap> feats;
};

RandomBatch random_batch(std::mt19937_64& rng, int b, int c, int d, int h, int w) {
    RandomBatch out;
    for (int k = 0; k < b; ++k) {
        out.probs.push_back(random_prob(rng, c, h, w));
        out.feats.push_back(random_feat(rng, d, h, w));
    }
    return out;
}

}  // namespace

TEST_CASE("prototypes of a uniform prediction over a constant field equal the field") {
    FeatureMap feat{Tensor3<double>(3, 4, 4)};
    const double v[3] = {0.5, -1.0, 2.0};
    for (int d = 0; d < 3; ++d)
        for (auto& x : feat.values.channel(d)) x = v[d];
    ProbabilityMap prob{Tensor3<double>(4, 4, 4, 0.25)};
    const auto p = compute_prototypes(prob, feat);
    for (int c = 0; c < 4; ++c)
        for (int d = 0; d < 3; ++d) CHECK(p.vector(c)[d] == doctest::Approx(v[d]).epsilon(1e-7));
    CHECK(p.degenerate_classes.empty());
}

TEST_CASE("prototypes two-pixel example") {
    ProbabilityMap prob{Tensor3<double>(2, 1, 2)};
    prob.values(0, 0, 0) = 1;
    prob.values(1, 0, 1) = 1;
    FeatureMap feat{Tensor3<double>(1, 1, 2)};
    feat.values(0, 0, 0) = 2;
    feat.values(0, 0, 1) = 6;
    const auto p = compute_prototypes(prob, feat);
    CHECK(p.vector(0)[0] == doctest::Approx(2.0).epsilon(1e-7));
    CHECK(p.vector(1)[0] == doctest::Approx(6.0).epsilon(1e-7));
    const auto oracle = ref::prototypes(prob.values, feat.values);
    CHECK(std::abs(oracle[0][0] - p.vector(0)[0]) < 1e-12);
    CHECK(std::abs(oracle[1][0] - p.vector(1)[0]) < 1e-12);
}

TEST_CASE("class without probability mass yields a flagged zero prototype") {
    ProbabilityMap prob{Tensor3<double>(3, 2, 2)};
    for (int i = 0; i < 4; ++i) prob.values.at(i % 2, i) = 1.0;  // class 2 never present
    std::mt19937_64 rng(7);
    const auto feat = random_feat(rng, 5, 2, 2);
    const auto p = compute_prototypes(prob, feat);
    for (double x : p.vector(2)) CHECK(x == 0.0);
    CHECK(p.is_degenerate(2));
    CHECK_FALSE(p.is_degenerate(0));
    CHECK(p.degenerate_classes == std::vector<int>{2});
}

TEST_CASE("prototype shape mismatch names both shapes") {
    std::mt19937_64 rng(8);
    const auto prob = random_prob(rng, 2, 4, 4);
    const auto feat = random_feat(rng, 3, 4, 5);
    try {
        compute_prototypes(prob, feat);
        FAIL("expected an exception");
    } catch (const InvalidInput& e) {
        const std::string msg = e.what();
        CHECK(msg.find("2x4x4") != std::string::npos);
        CHECK(msg.find("3x4x5") != std::string::npos);
    }
}

TEST_CASE("ground-truth prototypes average the masked features") {
    std::mt19937_64 rng(9);
    const auto mask = random_one_hot(rng, 3, 6, 6);
    const auto feat = random_feat(rng, 4, 6, 6);
    const auto p = compute_prototypes_from_mask(mask, feat);
    const auto oracle = ref::prototypes(tensor_cast<double>(mask), feat.values);
    for (int c = 0; c < 3; ++c)
        for (int d = 0; d < 4; ++d) CHECK(std::abs(p.vector(c)[d] - oracle[c][d]) < 1e-12);
}

TEST_CASE("cosine similarity examples") {
    PrototypeSet protos{1, 2, 0, {1.0, 1.0}, {}};
    FeatureMap feat{Tensor3<double>(2, 1, 3)};
    // pixel 0: (1,0) -> 1/sqrt(2); pixel 1: (1,1) -> 1; pixel 2: (-1,-1) -> -1
    feat.values(0, 0, 0) = 1;
    feat.values(0, 0, 1) = 1;
    feat.values(1, 0, 1) = 1;
    feat.values(0, 0, 2) = -1;
    feat.values(1, 0, 2) = -1;
    const auto s = cosine_similarity_map(feat, protos);
    CHECK(std::abs(s(0, 0, 0) - 0.7071) < 1e-4);
    CHECK(s(0, 0, 1) == doctest::Approx(1.0).epsilon(1e-7));
    CHECK(s(0, 0, 2) == doctest::Approx(-1.0).epsilon(1e-7));

    PrototypeSet wrong{1, 3, 0, {1.0, 1.0, 1.0}, {}};
    CHECK_THROWS_AS(cosine_similarity_map(feat, wrong), InvalidInput);
}

TEST_CASE("cosine map of a degenerate class is zero") {
    std::mt19937_64 rng(10);
    const auto feat = random_feat(rng, 4, 3, 3);
    PrototypeSet protos{2, 4, 0, std::vector<double>(8, 0.0), {0, 1}};
    std::fill(protos.vectors.begin(), protos.vectors.begin() + 4, 1.0);
    const auto s = cosine_similarity_map(feat, protos);
    for (double v : s.channel(1)) CHECK(v == 0.0);
}

TEST_CASE("cosine similarity stays in [-1, 1] and is scale invariant") {
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 30; ++trial) {
        const auto prob = random_prob(rng, 3, 6, 6);
        auto feat = random_feat(rng, 8, 6, 6);
        const auto protos = compute_prototypes(prob, feat);
        const auto s = cosine_similarity_map(feat, protos);
        for (double v : s.flat()) {
            CHECK(v >= -1.0);
            CHECK(v <= 1.0);
        }
        std::uniform_real_distribution<double> scale(0.01, 100.0);
        const double a = scale(rng);
        FeatureMap scaled = feat;
        for (auto& v : scaled.values.flat()) v *= a;
        const auto protos_scaled = compute_prototypes(prob, scaled);
        CHECK(max_abs_diff(cosine_similarity_map(scaled, protos_scaled), s) < 1e-6);
    }
}

TEST_CASE("self-aware prediction examples") {
    Tensor3<double> sims(3, 2, 2, 0.3);
    const auto uniform = self_aware_prediction(sims);
    for (double v : uniform.values.flat()) CHECK(v == doctest::Approx(1.0 / 3));
    Tensor3<double> two(2, 1, 1);
    two(0, 0, 0) = 1;
    two(1, 0, 0) = -1;
    const auto p = self_aware_prediction(two);
    CHECK(std::abs(p.values(0, 0, 0) - 0.8808) < 1e-4);
    CHECK(std::abs(p.values(1, 0, 0) - 0.1192) < 1e-4);
    std::mt19937_64 rng(12);
    const auto s = random_tensor(rng, 4, 5, 5, -1, 1);
    CHECK(argmax_one_hot(self_aware_prediction(s).values) == argmax_one_hot(s));
}

TEST_CASE("cross-sample prediction examples") {
    SUBCASE("one other sample reduces to its softmax") {
        std::mt19937_64 rng(13);
        SimilarityStack stack{{random_tensor(rng, 3, 4, 4, -1, 1), random_tensor(rng, 3, 4, 4, -1, 1)}, 0};
        CHECK(max_abs_diff(cross_sample_prediction(stack).values, class_softmax(stack.maps[1]).values) < 1e-12);
    }
    SUBCASE("class-swap symmetry gives one half") {
        Tensor3<double> self(2, 1, 1), a(2, 1, 1), b(2, 1, 1);
        a(0, 0, 0) = 1;
        b(1, 0, 0) = 1;
        const auto p = cross_sample_prediction({{self, a, b}, 0});
        CHECK(p.values(0, 0, 0) == doctest::Approx(0.5));
        CHECK(p.values(1, 0, 0) == doctest::Approx(0.5));
    }
    SUBCASE("two identical other maps") {
        Tensor3<double> self(2, 1, 1, 0.9), a(2, 1, 1);
        a(0, 0, 0) = 1;
        const auto p = cross_sample_prediction({{a, self, a}, 1});
        CHECK(std::abs(p.values(0, 0, 0) - 0.7311) < 1e-4);
        CHECK(std::abs(p.values(1, 0, 0) - 0.2689) < 1e-4);
    }
    SUBCASE("a stack of one is rejected") {
        CHECK_THROWS_AS(cross_sample_prediction({{Tensor3<double>(2, 1, 1)}, 0}), InvalidInput);
    }
}

TEST_CASE("cross-sample prediction ignores the self map and the order of the others") {
    std::mt19937_64 rng(14);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<Tensor3<double>> maps;
        for (int n = 0; n < 5; ++n) maps.push_back(random_tensor(rng, 3, 4, 4, -1, 1));
        const auto base = cross_sample_prediction({maps, 2});
        CHECK(base.normalization_error() < 1e-5);

        auto changed_self = maps;
        changed_self[2] = random_tensor(rng, 3, 4, 4, -1, 1);
        CHECK(max_abs_diff(cross_sample_prediction({changed_self, 2}).values, base.values) < 1e-15);

        // Permute the non-target maps; the target keeps its slot.
        std::vector<Tensor3<double>> permuted = {maps[4], maps[3], maps[2], maps[0], maps[1]};
        CHECK(max_abs_diff(cross_sample_prediction({permuted, 2}).values, base.values) < 1e-12);
    }
}

TEST_CASE("kernels match the brute-force oracles on random batches") {
    std::mt19937_64 rng(15);
    const int B = 4, C = 3, D = 8, H = 8, W = 8;
    for (int trial = 0; trial < 50; ++trial) {
        const auto batch = random_batch(rng, B, C, D, H, W);
        const auto protos = compute_batch_prototypes(batch.probs, batch.feats);
        REQUIRE(protos.size() == static_cast<std::size_t>(B));
        std::size_t vectors = 0;
        for (int k = 0; k < B; ++k) {
            const auto oracle = ref::prototypes(batch.probs[k].values, batch.feats[k].values);
            const auto rows = as_rows(protos[k]);
            vectors += rows.size();
            for (int c = 0; c < C; ++c)
                for (int d = 0; d < D; ++d) CHECK(std::abs(rows[c][d] - oracle[c][d]) < 1e-6);
        }
        CHECK(vectors == static_cast<std::size_t>(B * C));

        for (int k = 0; k < B; ++k) {
            const auto stack = build_similarity_stack(batch.feats[k], protos, k);
            REQUIRE(stack.batch_size() == B);
            std::vector<Tensor3<double>> oracle_maps;
            for (int n = 0; n < B; ++n) {
                oracle_maps.push_back(ref::cosine(batch.feats[k].values, as_rows(protos[n])));
                CHECK(max_abs_diff(stack.maps[n], oracle_maps.back()) < 1e-6);
            }
            CHECK(max_abs_diff(cross_sample_prediction(stack).values, ref::cross_sample(oracle_maps, k)) < 1e-6);
            CHECK(max_abs_diff(self_aware_prediction(stack.self_map()).values, ref::softmax(oracle_maps[k])) < 1e-6);
        }
    }
}
