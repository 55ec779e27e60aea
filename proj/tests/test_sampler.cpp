#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "flowsynth/nn.hpp"
#include "flowsynth/rng.hpp"
#include "flowsynth/sampler.hpp"

using namespace flowsynth;

namespace {

SamplerConfig fixed_cfg(SamplerMethod m, int steps) {
    SamplerConfig c;
    c.method = m;
    c.steps = steps;
    return c;
}

ModelConfig tiny_model_config() {
    ModelConfig c;
    c.variant = Variant::CrossV;
    c.depth = 1;
    c.d_model = 16;
    c.heads = 2;
    c.latent_len = 6;
    c.latent_dim = 3;
    c.video_dim = 4;
    c.phoneme_dim = 3;
    return c;
}

template <typename T>
ConditionBundle<T> bundle_for(const ModelConfig& cfg, Rng& rng) {
    ConditionBundle<T> b;
    b.video = Tensor<T>::randn({cfg.latent_len, cfg.video_dim}, rng);
    b.phoneme = Tensor<T>::randn({cfg.latent_len, cfg.phoneme_dim}, rng);
    return b;
}

} // namespace

TEST_CASE("cfg_combine reproduces the guidance arithmetic") {
    auto v_cond = TensorD::full({2, 2}, 2.0);
    auto v_null = TensorD::full({2, 2}, 1.0);
    auto out = cfg_combine(v_cond, v_null, 3.0);
    for (double v : out.data()) CHECK(v == doctest::Approx(4.0)); // 1 + 3*(2-1)
}

TEST_CASE("cfg gamma identities are bitwise") {
    ModelConfig mc = tiny_model_config();
    VelocityModel<double> model(mc, Rng(5));
    Rng rng(151);
    auto bundle = bundle_for<double>(mc, rng);
    auto x = TensorD::randn({mc.latent_len, mc.latent_dim}, rng);

    auto direct_cond = model.forward(x, 0.37, bundle);
    auto via_cfg1 = cfg_velocity(model, x, 0.37, bundle, 1.0);
    for (std::size_t i = 0; i < direct_cond.size(); ++i)
        CHECK(via_cfg1.data()[i] == direct_cond.data()[i]);

    auto direct_null = model.forward(x, 0.37, bundle.nulled());
    auto via_cfg0 = cfg_velocity(model, x, 0.37, bundle, 0.0);
    for (std::size_t i = 0; i < direct_null.size(); ++i)
        CHECK(via_cfg0.data()[i] == direct_null.data()[i]);
}

TEST_CASE("constant velocity is integrated exactly by every method") {
    auto x0 = TensorD::from_data({2, 2}, {0.5, -1.0, 2.0, 0.0});
    auto c = TensorD::from_data({2, 2}, {1.0, 2.0, -0.5, 0.25});
    VelocityFn<double> v = [&](const TensorD&, double) { return c.clone(); };

    for (auto m : {SamplerMethod::euler, SamplerMethod::midpoint, SamplerMethod::rk4}) {
        auto x1 = integrate_fixed(v, x0, fixed_cfg(m, 7));
        for (std::size_t i = 0; i < x0.size(); ++i)
            CHECK(x1.data()[i] == doctest::Approx(x0.data()[i] + c.data()[i]).epsilon(1e-12));
    }

    Dopri5Stats stats;
    SamplerConfig dc;
    dc.method = SamplerMethod::dopri5;
    dc.rtol = 1e-6;
    dc.atol = 1e-8;
    auto x1 = integrate_dopri5(v, x0, dc, &stats);
    for (std::size_t i = 0; i < x0.size(); ++i)
        CHECK(x1.data()[i] == doctest::Approx(x0.data()[i] + c.data()[i]).epsilon(1e-12));
    CHECK(stats.accepted == 1);
    CHECK(stats.rejected == 0);
}

TEST_CASE("single euler step is x0 + v(x0, 0)") {
    auto x0 = TensorD::from_data({2}, {1.0, -1.0});
    VelocityFn<double> v = [](const TensorD& x, double) { return scale(x, 2.0); };
    auto x1 = integrate_fixed(v, x0, fixed_cfg(SamplerMethod::euler, 1));
    CHECK(x1.data()[0] == doctest::Approx(3.0));
    CHECK(x1.data()[1] == doctest::Approx(-3.0));
}

TEST_CASE("fixed-step errors shrink at the expected orders on dx/dt = -x") {
    auto x0 = TensorD::from_data({1}, {1.0});
    VelocityFn<double> v = [](const TensorD& x, double) { return scale(x, -1.0); };
    const double exact = std::exp(-1.0);

    auto err_at = [&](SamplerMethod m, int steps) {
        auto x1 = integrate_fixed(v, x0, fixed_cfg(m, steps));
        return std::abs(x1.item() - exact);
    };

    // halving h should scale the error by about 2^order
    const double euler_ratio = err_at(SamplerMethod::euler, 32) / err_at(SamplerMethod::euler, 64);
    CHECK(euler_ratio > std::pow(2.0, 0.7));
    CHECK(euler_ratio < std::pow(2.0, 1.3));

    const double mid_ratio =
        err_at(SamplerMethod::midpoint, 32) / err_at(SamplerMethod::midpoint, 64);
    CHECK(mid_ratio > std::pow(2.0, 1.7));
    CHECK(mid_ratio < std::pow(2.0, 2.3));

    const double rk4_ratio = err_at(SamplerMethod::rk4, 16) / err_at(SamplerMethod::rk4, 32);
    CHECK(rk4_ratio > std::pow(2.0, 3.7));
    CHECK(rk4_ratio < std::pow(2.0, 4.3));
}

TEST_CASE("dopri5 hits the analytic decay within tolerance") {
    auto x0 = TensorD::from_data({1}, {1.0});
    VelocityFn<double> v = [](const TensorD& x, double) { return scale(x, -1.0); };
    const double exact = std::exp(-1.0);

    SamplerConfig tight;
    tight.method = SamplerMethod::dopri5;
    tight.rtol = 1e-6;
    tight.atol = 1e-8;
    Dopri5Stats stats;
    auto x1 = integrate_dopri5(v, x0, tight, &stats);
    CHECK(std::abs(x1.item() - exact) < 1e-5);
    CHECK(stats.accepted >= 1);
    CHECK(stats.nfe == 1 + 6 * (stats.accepted + stats.rejected));

    SamplerConfig loose = tight;
    loose.rtol = 1e-3;
    loose.atol = 1e-5;
    auto xl = integrate_dopri5(v, x0, loose);
    // tightening rtol must not worsen the terminal error
    CHECK(std::abs(x1.item() - exact) <= std::abs(xl.item() - exact) + 1e-15);
}

TEST_CASE("dopri5 reports stiffness as step underflow") {
    auto x0 = TensorD::from_data({1}, {1.0});
    // non-integrable blow-up near t = 1
    VelocityFn<double> v = [](const TensorD& x, double t) {
        return scale(x, 1.0 / ((1.0 - t) * (1.0 - t) + 1e-30));
    };
    SamplerConfig c;
    c.method = SamplerMethod::dopri5;
    c.rtol = 1e-6;
    c.atol = 1e-8;
    CHECK_THROWS_AS(integrate_dopri5(v, x0, c), NumericError);
}

TEST_CASE("sampling a real model is deterministic in the seed") {
    ModelConfig mc = tiny_model_config();
    VelocityModel<double> model(mc, Rng(8));
    SamplerConfig sc;
    sc.method = SamplerMethod::dopri5;
    sc.cfg_scale = 2.0;

    auto run = [&] {
        Rng rng(777);
        auto bundle = bundle_for<double>(mc, rng);
        auto x0 = TensorD::randn({mc.latent_len, mc.latent_dim}, rng);
        auto out = sample_latent(model, bundle, x0, sc);
        return std::vector<double>(out.data().begin(), out.data().end());
    };
    CHECK(run() == run());
}

TEST_CASE("gamma=1 sampling equals conditional-only sampling bitwise") {
    ModelConfig mc = tiny_model_config();
    VelocityModel<double> model(mc, Rng(9));
    Rng rng(900);
    auto bundle = bundle_for<double>(mc, rng);
    auto x0 = TensorD::randn({mc.latent_len, mc.latent_dim}, rng);

    SamplerConfig sc;
    sc.method = SamplerMethod::rk4;
    sc.steps = 6;
    sc.cfg_scale = 1.0;
    auto guided = sample_latent(model, bundle, x0, sc);

    VelocityFn<double> cond_only = [&](const TensorD& x, double t) {
        return model.forward(x, t, bundle);
    };
    auto plain = integrate_fixed(cond_only, x0, sc);
    for (std::size_t i = 0; i < guided.size(); ++i)
        CHECK(guided.data()[i] == plain.data()[i]);
}
