#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "flowsynth/conditioning.hpp"
#include "flowsynth/model_config.hpp"
#include "flowsynth/rng.hpp"

using namespace flowsynth;

namespace {

ModelConfig small_config(Variant v, ConcatAxis axis = ConcatAxis::channel) {
    ModelConfig c;
    c.variant = v;
    c.depth = 1;
    c.d_model = 8;
    c.heads = 2;
    c.latent_len = 5;
    c.latent_dim = 2;
    c.video_dim = 3;
    c.phoneme_dim = 2;
    c.phoneme_vocab = 4;
    c.concat_axis = axis;
    return c;
}

template <typename T>
ConditionProjections<T> random_projections(const ModelConfig& cfg, Rng& rng) {
    ConditionProjections<T> p;
    p.video_cross = Tensor<T>::randn({cfg.video_dim, cfg.d_model}, rng);
    p.phoneme_cross = Tensor<T>::randn({cfg.phoneme_dim, cfg.d_model}, rng);
    p.video_seq = Tensor<T>::randn({cfg.video_dim, cfg.d_model}, rng);
    p.phoneme_seq = Tensor<T>::randn({cfg.phoneme_dim, cfg.d_model}, rng);
    p.speaker_seq = Tensor<T>::randn({cfg.video_dim, cfg.d_model}, rng);
    return p;
}

} // namespace

TEST_CASE("interpolate_video identity, constants, and the 2->3 case") {
    Rng rng(101);
    auto raw = TensorD::randn({6, 3}, rng);
    auto same = interpolate_video(raw, 6);
    for (std::size_t i = 0; i < raw.size(); ++i) CHECK(same.data()[i] == raw.data()[i]);

    auto constant = interpolate_video(TensorD::full({4, 2}, 1.5), 9);
    for (double v : constant.data()) CHECK(v == doctest::Approx(1.5).epsilon(1e-12));

    auto two = interpolate_video(TensorD::from_data({2, 1}, {0.0, 1.0}), 3);
    CHECK(two.at(0, 0) == doctest::Approx(0.0));
    CHECK(two.at(1, 0) == doctest::Approx(0.5));
    CHECK(two.at(2, 0) == doctest::Approx(1.0));

    // endpoints map exactly for any length pair
    auto r2 = interpolate_video(raw, 17);
    for (std::size_t c = 0; c < 3; ++c) {
        CHECK(r2.at(0, c) == raw.at(0, c));
        CHECK(r2.at(16, c) == raw.at(5, c));
    }

    CHECK_THROWS_AS(interpolate_video(TensorD::zeros({1, 2}), 0), ShapeError);
}

TEST_CASE("expand_phonemes repeats, pads, and validates") {
    Rng rng(103);
    auto table = TensorD::randn({4, 2}, rng);

    PhonemeTrack one{{2}, {5}};
    auto full = expand_phonemes(one, table, 5);
    for (std::size_t f = 0; f < 5; ++f)
        for (std::size_t c = 0; c < 2; ++c) CHECK(full.at(f, c) == table.at(2, c));

    PhonemeTrack empty{};
    auto zeros = expand_phonemes(empty, table, 4);
    for (double v : zeros.data()) CHECK(v == 0.0);

    PhonemeTrack ab{{0, 1}, {2, 1}};
    auto r = expand_phonemes(ab, table, 4);
    for (std::size_t c = 0; c < 2; ++c) {
        CHECK(r.at(0, c) == table.at(0, c));
        CHECK(r.at(1, c) == table.at(0, c));
        CHECK(r.at(2, c) == table.at(1, c));
        CHECK(r.at(3, c) == 0.0);
    }

    PhonemeTrack shifted{{3}, {2}, 1};
    auto s = expand_phonemes(shifted, table, 4);
    for (std::size_t c = 0; c < 2; ++c) {
        CHECK(s.at(0, c) == 0.0);
        CHECK(s.at(1, c) == table.at(3, c));
        CHECK(s.at(2, c) == table.at(3, c));
        CHECK(s.at(3, c) == 0.0);
    }

    PhonemeTrack overflow{{0, 1}, {3, 3}};
    CHECK_THROWS_AS(expand_phonemes(overflow, table, 4), AlignmentError);
    PhonemeTrack bad_token{{9}, {1}};
    CHECK_THROWS_AS(expand_phonemes(bad_token, table, 4), ContractError);

    auto tble = table.clone();
    const double err = grad_check(
        [&](TensorD& t) {
            auto e = expand_phonemes(ab, t, 4);
            return sum_all(mul(e, e));
        },
        tble);
    CHECK(err < 1e-7);
}

TEST_CASE("assemble_conditions routes per variant with exclusivity") {
    Rng rng(107);
    for (Variant v : {Variant::CrossV, Variant::CrossVS, Variant::ConcatV, Variant::ConcatVS}) {
        ModelConfig cfg = small_config(v);
        auto proj = random_projections<double>(cfg, rng);
        ConditionBundle<double> bundle;
        bundle.video = TensorD::randn({cfg.latent_len, cfg.video_dim}, rng);
        bundle.phoneme = TensorD::randn({cfg.latent_len, cfg.phoneme_dim}, rng);

        auto routed = assemble_conditions(bundle, cfg, proj);
        CHECK(routed.cross_ctx.defined() == cfg.has_cross());
        if (routed.cross_ctx.defined())
            CHECK(routed.cross_positions.size() == routed.cross_ctx.dim(0));

        // perturb the phoneme stream; the cross context may move only when
        // phonemes route through cross-attention
        ConditionBundle<double> bumped = bundle;
        bumped.phoneme = add(bundle.phoneme, TensorD::full(bundle.phoneme.shape(), 0.5));
        auto routed2 = assemble_conditions(bumped, cfg, proj);
        if (cfg.has_cross()) {
            bool cross_moved = false;
            for (std::size_t i = 0; i < routed.cross_ctx.size(); ++i)
                cross_moved = cross_moved ||
                              routed.cross_ctx.data()[i] != routed2.cross_ctx.data()[i];
            CHECK(cross_moved == cfg.phoneme_in_cross());
        }
        if (routed.in_context_channels.defined()) {
            bool ic_moved = false;
            for (std::size_t i = 0; i < routed.in_context_channels.size(); ++i)
                ic_moved = ic_moved || routed.in_context_channels.data()[i] !=
                                           routed2.in_context_channels.data()[i];
            CHECK(ic_moved == !cfg.phoneme_in_cross());
        }
    }
}

TEST_CASE("CrossVS with a null phoneme keeps zeroed rows in the cross context") {
    Rng rng(109);
    ModelConfig cfg = small_config(Variant::CrossVS);
    auto proj = random_projections<double>(cfg, rng);
    ConditionBundle<double> bundle;
    bundle.video = TensorD::randn({cfg.latent_len, cfg.video_dim}, rng);
    bundle.phoneme = TensorD::randn({cfg.latent_len, cfg.phoneme_dim}, rng);
    auto nulled = bundle.with_phoneme_nulled();
    CHECK(nulled.phoneme_null);

    auto routed = assemble_conditions(nulled, cfg, proj);
    // rows [latent_len, 2*latent_len) hold the projected phoneme stream
    for (std::size_t r = cfg.latent_len; r < 2 * cfg.latent_len; ++r)
        for (std::size_t c = 0; c < cfg.d_model; ++c) CHECK(routed.cross_ctx.at(r, c) == 0.0);
}

TEST_CASE("ConcatVS channel mode concatenates both condition streams") {
    Rng rng(113);
    ModelConfig cfg = small_config(Variant::ConcatVS);
    auto proj = random_projections<double>(cfg, rng);
    ConditionBundle<double> bundle;
    bundle.video = TensorD::randn({cfg.latent_len, cfg.video_dim}, rng);
    bundle.phoneme = TensorD::randn({cfg.latent_len, cfg.phoneme_dim}, rng);
    auto routed = assemble_conditions(bundle, cfg, proj);
    REQUIRE(routed.in_context_channels.defined());
    CHECK(routed.in_context_channels.dim(1) == cfg.video_dim + cfg.phoneme_dim);
    CHECK_FALSE(routed.cross_ctx.defined());
}

TEST_CASE("speaker rides the video route") {
    Rng rng(127);
    ConditionBundle<double> bundle;
    for (Variant v : {Variant::CrossV, Variant::CrossVS, Variant::ConcatV, Variant::ConcatVS}) {
        ModelConfig cfg = small_config(v);
        auto proj = random_projections<double>(cfg, rng);
        bundle.video = TensorD::randn({cfg.latent_len, cfg.video_dim}, rng);
        bundle.phoneme = TensorD::randn({cfg.latent_len, cfg.phoneme_dim}, rng);
        bundle.speaker = TensorD::randn({1, cfg.video_dim}, rng);

        auto routed = assemble_conditions(bundle, cfg, proj);
        const std::size_t expected_cross_rows =
            (cfg.video_in_cross() ? cfg.latent_len + 1 : 0) +
            (cfg.phoneme_in_cross() ? cfg.latent_len : 0);
        if (cfg.has_cross()) CHECK(routed.cross_ctx.dim(0) == expected_cross_rows);
        if (cfg.speaker_in_cross()) {
            CHECK(routed.sequence_prefixes.empty());
            CHECK(routed.cross_positions.front() == 0);
        } else {
            REQUIRE(routed.sequence_prefixes.size() == 1);
            CHECK(routed.sequence_prefixes.front().dim(0) == 1);
        }
    }
}

TEST_CASE("drop_conditions honors the dropout probabilities") {
    Rng rng(131);
    ConditionBundle<double> bundle;
    bundle.video = TensorD::randn({4, 3}, rng);
    bundle.phoneme = TensorD::randn({4, 2}, rng);
    bundle.speaker = TensorD::randn({1, 3}, rng);

    Rng keep(1);
    auto same = drop_conditions(bundle, 0.0, 0.0, keep);
    CHECK_FALSE(same.video_null);
    CHECK_FALSE(same.phoneme_null);
    CHECK(same.has_speaker());
    for (std::size_t i = 0; i < bundle.video.size(); ++i)
        CHECK(same.video.data()[i] == bundle.video.data()[i]);

    Rng drop(2);
    auto nulled = drop_conditions(bundle, 1.0, 1.0, drop);
    CHECK(nulled.video_null);
    CHECK(nulled.phoneme_null);
    CHECK_FALSE(nulled.has_speaker()); // speaker follows the video route
    for (double v : nulled.video.data()) CHECK(v == 0.0);
    for (double v : nulled.phoneme.data()) CHECK(v == 0.0);

    // empirical rate of the paper's 0.1 dropout stays within +-0.01
    Rng stat(3);
    int video_drops = 0, phoneme_drops = 0;
    const int trials = 10000;
    for (int i = 0; i < trials; ++i) {
        auto b = drop_conditions(bundle, 0.1, 0.1, stat);
        video_drops += b.video_null ? 1 : 0;
        phoneme_drops += b.phoneme_null ? 1 : 0;
    }
    CHECK(std::abs(video_drops / double(trials) - 0.1) <= 0.01);
    CHECK(std::abs(phoneme_drops / double(trials) - 0.1) <= 0.01);

    CHECK_THROWS_AS(drop_conditions(bundle, -0.1, 0.0, rng), ContractError);
}

TEST_CASE("alignment invariant: assembled bundles are frame-aligned") {
    Rng rng(137);
    ModelConfig cfg = small_config(Variant::CrossV);
    auto proj = random_projections<double>(cfg, rng);
    ConditionBundle<double> bad;
    bad.video = TensorD::randn({cfg.latent_len + 1, cfg.video_dim}, rng);
    bad.phoneme = TensorD::randn({cfg.latent_len, cfg.phoneme_dim}, rng);
    CHECK_THROWS_AS(assemble_conditions(bad, cfg, proj), ShapeError);

    ConditionBundle<double> wrong_dim;
    wrong_dim.video = TensorD::randn({cfg.latent_len, cfg.video_dim + 1}, rng);
    wrong_dim.phoneme = TensorD::randn({cfg.latent_len, cfg.phoneme_dim}, rng);
    CHECK_THROWS_AS(assemble_conditions(wrong_dim, cfg, proj), ConfigError);
}
