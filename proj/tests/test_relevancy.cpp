#include <doctest.h>

#include <cmath>

#include "attnrel/errors.hpp"
#include "attnrel/relevancy.hpp"
#include "support/util.hpp"

using namespace attnrel;

namespace {

ForwardTrace traced(const testutil::RandomCase& rc, const Target& target) {
    const Model model(rc.config);
    ForwardTrace trace = model.forward(rc.sample);
    backward_fill(trace, target);
    return trace;
}

void zero_grads(ForwardTrace& trace) {
    for (AttentionRecord& r : trace.records) r.grad = Tensor(r.attention.shape());
}

} // namespace

TEST_CASE("init_state matches the initialization rules") {
    const RelevancyState bi = init_state(Architecture::SelfPlusCo, 2, 3);
    CHECK(max_abs_diff(bi.text_text, Tensor::identity(2)) == 0.0);
    CHECK(max_abs_diff(bi.image_image, Tensor::identity(3)) == 0.0);
    CHECK(max_abs_diff(bi.text_image, Tensor::zeros({2, 3})) == 0.0);
    CHECK(max_abs_diff(bi.image_text, Tensor::zeros({3, 2})) == 0.0);

    const RelevancyState ed = init_state(Architecture::EncoderDecoder, 4, 2);
    CHECK(max_abs_diff(ed.enc_enc, Tensor::identity(4)) == 0.0);
    CHECK(max_abs_diff(ed.dec_dec, Tensor::identity(2)) == 0.0);
    CHECK(max_abs_diff(ed.dec_enc, Tensor::zeros({2, 4})) == 0.0);

    const RelevancyState js = init_state(Architecture::PureSelf, 5, 0);
    CHECK(max_abs_diff(js.joint, Tensor::identity(5)) == 0.0);

    CHECK_THROWS_AS(init_state(Architecture::SelfPlusCo, 0, 3), RejectedInput);
}

TEST_CASE("head_average clamps and averages") {
    SUBCASE("all-negative weights give zero") {
        const Tensor a = Tensor::full({2, 2, 2}, 0.5);
        const Tensor g = Tensor::full({2, 2, 2}, -1.0);
        const Tensor avg = head_average(a, g);
        for (std::size_t i = 0; i < avg.size(); ++i) CHECK(avg[i] == 0.0);
    }
    SUBCASE("single head") {
        const Tensor a({1, 1, 1}, {0.5});
        const Tensor g({1, 1, 1}, {2.0});
        CHECK(head_average(a, g)[0] == doctest::Approx(1.0));
    }
    SUBCASE("mean over two heads with one clamped") {
        const Tensor a({2, 1, 1}, {0.5, 0.5});
        const Tensor g({2, 1, 1}, {2.0, -2.0});
        CHECK(head_average(a, g)[0] == doctest::Approx(0.5));
    }
    SUBCASE("missing gradient is a trace error") {
        AttentionRecord record{AttentionKind::SelfText, 0, Tensor::zeros({1, 2, 2}), std::nullopt,
                               {}};
        CHECK_THROWS_AS(head_average(record), TraceError);
    }
}

TEST_CASE("apply_self from the initial state") {
    Rng rng(41);
    const Tensor avg = clamp_min(testutil::random_tensor(rng, {3, 3}), 0.0);
    RelevancyState state = init_state(Architecture::SelfPlusCo, 3, 2);

    apply_self(state.text_text, &state.text_image, avg, AblationVariant::Full);
    CHECK(max_abs_diff(state.text_text, add(Tensor::identity(3), avg)) < 1e-15);
    CHECK(max_abs_diff(state.text_image, Tensor::zeros({3, 2})) == 0.0);

    SUBCASE("zero update is a no-op") {
        RelevancyState before = state;
        apply_self(state.text_text, &state.text_image, Tensor::zeros({3, 3}),
                   AblationVariant::Full);
        CHECK(max_abs_diff(state.text_text, before.text_text) == 0.0);
    }
}

TEST_CASE("two self layers expand to the closed form") {
    Rng rng(42);
    const Tensor a1 = clamp_min(testutil::random_tensor(rng, {3, 3}), 0.0);
    const Tensor a2 = clamp_min(testutil::random_tensor(rng, {3, 3}), 0.0);
    Tensor self_map = Tensor::identity(3);
    apply_self(self_map, nullptr, a1, AblationVariant::Full);
    apply_self(self_map, nullptr, a2, AblationVariant::Full);
    const Tensor expect = matmul(add(Tensor::identity(3), a2), add(Tensor::identity(3), a1));
    CHECK(max_abs_diff(self_map, expect) < 1e-12);
}

TEST_CASE("normalize_self follows the row rules") {
    SUBCASE("identity stays identity") {
        CHECK(max_abs_diff(normalize_self(Tensor::identity(4)), Tensor::identity(4)) == 0.0);
    }
    SUBCASE("rows scale to unit mass before the identity returns") {
        Tensor r = Tensor::identity(2);
        r(0, 0) += 0.2;
        r(0, 1) += 0.2;
        const Tensor out = normalize_self(r);
        CHECK(out(0, 0) == doctest::Approx(1.5));
        CHECK(out(0, 1) == doctest::Approx(0.5));
        CHECK(out(1, 0) == 0.0);
        CHECK(out(1, 1) == 1.0);
    }
    SUBCASE("nonzero-mass rows sum to two") {
        Rng rng(43);
        int checked = 0;
        for (int trial = 0; trial < 50; ++trial) {
            Tensor r = add(Tensor::identity(4),
                           clamp_min(testutil::random_tensor(rng, {4, 4}), 0.0));
            const Tensor out = normalize_self(r);
            for (std::size_t i = 0; i < 4; ++i) {
                double mass = 0.0, sum = 0.0;
                for (std::size_t j = 0; j < 4; ++j) {
                    mass += r(i, j) - (i == j ? 1.0 : 0.0);
                    sum += out(i, j);
                }
                if (mass <= 1e-12) continue;
                CHECK(sum == doctest::Approx(2.0).epsilon(1e-9));
                ++checked;
            }
        }
        CHECK(checked > 100);
    }
}

TEST_CASE("apply_cross from the initial state adds the averaged map") {
    Rng rng(44);
    const Tensor avg = clamp_min(testutil::random_tensor(rng, {2, 3}), 0.0);
    RelevancyState state = init_state(Architecture::SelfPlusCo, 2, 3);
    const CrossInputs snap{&state.text_text, &state.image_image, &state.image_text};
    Tensor cross = state.text_image;
    Tensor self = state.text_text;
    apply_cross(cross, &self, avg, snap, AblationVariant::Full);
    CHECK(max_abs_diff(cross, avg) < 1e-12);
    CHECK(max_abs_diff(self, Tensor::identity(2)) == 0.0); // cross_qs is zero

    SUBCASE("zero update is a no-op") {
        Tensor cross2 = state.text_image;
        apply_cross(cross2, &self, Tensor::zeros({2, 3}), snap, AblationVariant::Full);
        CHECK(max_abs_diff(cross2, state.text_image) == 0.0);
    }
}

TEST_CASE("no-self-attention variant differs exactly when self maps left identity") {
    Rng rng(45);
    const Tensor avg = clamp_min(testutil::random_tensor(rng, {2, 2}), 0.0);

    RelevancyState identity_state = init_state(Architecture::SelfPlusCo, 2, 2);
    Tensor cross_full = identity_state.text_image;
    Tensor cross_bare = identity_state.text_image;
    CrossInputs snap{&identity_state.text_text, &identity_state.image_image,
                     &identity_state.image_text};
    apply_cross(cross_full, nullptr, avg, snap, AblationVariant::Full);
    apply_cross(cross_bare, nullptr, avg, snap, AblationVariant::NoSelfAttInCross);
    CHECK(max_abs_diff(cross_full, cross_bare) < 1e-15);

    // once a self map moved away from identity the two variants disagree
    Tensor tt = add(Tensor::identity(2), clamp_min(testutil::random_tensor(rng, {2, 2}), 0.0));
    CrossInputs moved{&tt, &identity_state.image_image, &identity_state.image_text};
    Tensor cross_full2 = identity_state.text_image;
    Tensor cross_bare2 = identity_state.text_image;
    apply_cross(cross_full2, nullptr, avg, moved, AblationVariant::Full);
    apply_cross(cross_bare2, nullptr, avg, moved, AblationVariant::NoSelfAttInCross);
    CHECK(max_abs_diff(cross_full2, cross_bare2) > 1e-8);
}

TEST_CASE("zero gradients leave the initial state untouched") {
    Rng rng(46);
    for (Architecture arch :
         {Architecture::PureSelf, Architecture::SelfPlusCo, Architecture::EncoderDecoder}) {
        const testutil::RandomCase rc = testutil::random_case(arch, rng);
        const Model model(rc.config);
        ForwardTrace trace = model.forward(rc.sample);
        zero_grads(trace);
        const RelevancyState state = propagate(trace);
        const RelevancyState fresh =
            arch == Architecture::PureSelf
                ? init_state(arch, model.joint_length(), 0)
                : (arch == Architecture::SelfPlusCo
                       ? init_state(arch, rc.config.text_tokens + 1, rc.config.image_tokens)
                       : init_state(arch, rc.config.image_tokens, rc.config.queries));
        for (std::size_t m = 0; m < state.maps().size(); ++m)
            CHECK(max_abs_diff(*state.maps()[m].second, *fresh.maps()[m].second) == 0.0);
    }
}

TEST_CASE("propagate matches the straight-line oracle on random traces") {
    Rng rng(47);
    const AblationVariant variants[] = {AblationVariant::Full, AblationVariant::NoNormalization,
                                        AblationVariant::NoAggregation,
                                        AblationVariant::NoSelfAttInCross};
    for (Architecture arch :
         {Architecture::PureSelf, Architecture::SelfPlusCo, Architecture::EncoderDecoder}) {
        for (int trial = 0; trial < 30; ++trial) {
            const testutil::RandomCase rc = testutil::random_case(arch, rng);
            const ForwardTrace trace = traced(rc, testutil::random_target(rc.config, rng));
            const std::vector<oracle::Record> records = testutil::to_oracle_records(trace);
            for (AblationVariant variant : variants) {
                const RelevancyState state = propagate(trace, variant);
                const oracle::Maps maps =
                    oracle::propagate(to_string(arch), records, to_string(variant));
                CHECK(testutil::oracle_gap(state, maps) < 1e-10);
            }
        }
    }
}

TEST_CASE("full propagation keeps every map nonnegative") {
    Rng rng(48);
    for (Architecture arch :
         {Architecture::PureSelf, Architecture::SelfPlusCo, Architecture::EncoderDecoder}) {
        for (int trial = 0; trial < 10; ++trial) {
            const testutil::RandomCase rc = testutil::random_case(arch, rng);
            const ForwardTrace trace = traced(rc, testutil::random_target(rc.config, rng));
            const RelevancyState state = propagate(trace);
            for (const auto& [name, map] : state.maps())
                for (std::size_t i = 0; i < map->size(); ++i) {
                    if ((*map)[i] < 0.0) {
                        CAPTURE(name);
                        CHECK((*map)[i] >= 0.0);
                    }
                }
        }
    }
}

TEST_CASE("extract_cls follows the row conventions") {
    SUBCASE("initial bi-modal state yields zero vectors") {
        const RelevancyState state = init_state(Architecture::SelfPlusCo, 3, 4);
        const ClsExtraction ext = extract_cls(state);
        REQUIRE(ext.text.size() == 3);
        REQUIRE(ext.image.size() == 4);
        for (double v : ext.text) CHECK(v == 0.0); // the one-hot entry is zeroed
        for (double v : ext.image) CHECK(v == 0.0);
    }
    SUBCASE("after one cross layer the image vector is the averaged map's cls row") {
        Rng rng(49);
        RelevancyState state = init_state(Architecture::SelfPlusCo, 3, 4);
        const Tensor avg = clamp_min(testutil::random_tensor(rng, {3, 4}), 0.0);
        const CrossInputs snap{&state.text_text, &state.image_image, &state.image_text};
        apply_cross(state.text_image, &state.text_text, avg, snap, AblationVariant::Full);
        const ClsExtraction ext = extract_cls(state);
        for (std::size_t j = 0; j < 4; ++j)
            CHECK(ext.image[j] == doctest::Approx(avg(0, j)).epsilon(1e-12));
    }
    SUBCASE("index out of range is rejected") {
        const RelevancyState state = init_state(Architecture::SelfPlusCo, 3, 4);
        CHECK_THROWS_AS(extract_cls(state, 3), RejectedInput);
    }
    SUBCASE("pure self splits the joint row") {
        RelevancyState state = init_state(Architecture::PureSelf, 7, 0); // 2 text + 3 image + 2
        state.joint(0, 1) = 0.3;  // first text slot
        state.joint(0, 4) = 0.8;  // first image slot
        const ClsExtraction ext = extract_cls(state, 0, 2, 3);
        REQUIRE(ext.text.size() == 3);
        REQUIRE(ext.image.size() == 3);
        CHECK(ext.text[0] == 0.0); // cls zeroed
        CHECK(ext.text[1] == doctest::Approx(0.3));
        CHECK(ext.image[0] == doctest::Approx(0.8));
    }
}

TEST_CASE("extract_query reads rows of the decoder-encoder map") {
    RelevancyState state = init_state(Architecture::EncoderDecoder, 4, 2);
    SUBCASE("initial state gives zeros") {
        const std::vector<double> row = extract_query(state, 1);
        REQUIRE(row.size() == 4);
        for (double v : row) CHECK(v == 0.0);
    }
    SUBCASE("after one decoder-cross it equals the averaged map row") {
        Rng rng(50);
        const Tensor avg = clamp_min(testutil::random_tensor(rng, {2, 4}), 0.0);
        const CrossInputs snap{&state.dec_dec, &state.enc_enc, nullptr};
        apply_cross(state.dec_enc, nullptr, avg, snap, AblationVariant::Full);
        const std::vector<double> row = extract_query(state, 1);
        for (std::size_t j = 0; j < 4; ++j)
            CHECK(row[j] == doctest::Approx(avg(1, j)).epsilon(1e-12));
        for (double v : row) CHECK(v >= 0.0);
    }
    SUBCASE("query out of range is rejected") {
        CHECK_THROWS_AS(extract_query(state, 2), RejectedInput);
    }
}
