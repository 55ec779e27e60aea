#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <string>

#include "flowsynth/conditioning.hpp"
#include "flowsynth/nn.hpp"
#include "flowsynth/tensor.hpp"

// ODE integration of the learned velocity field from t=0 (noise) to t=1
// (data), with classifier-free guidance. Fixed-step Euler/midpoint/RK4 plus
// an embedded Dormand-Prince 5(4) pair with PI step control.

namespace flowsynth {

enum class SamplerMethod { euler, midpoint, rk4, dopri5 };

inline const char* to_string(SamplerMethod m) {
    switch (m) {
        case SamplerMethod::euler: return "euler";
        case SamplerMethod::midpoint: return "midpoint";
        case SamplerMethod::rk4: return "rk4";
        case SamplerMethod::dopri5: return "dopri5";
    }
    return "?";
}

inline SamplerMethod sampler_method_from_string(const std::string& s) {
    if (s == "euler") return SamplerMethod::euler;
    if (s == "midpoint") return SamplerMethod::midpoint;
    if (s == "rk4") return SamplerMethod::rk4;
    if (s == "dopri5") return SamplerMethod::dopri5;
    throw ConfigError("unknown sampler method '" + s + "'");
}

struct SamplerConfig {
    SamplerMethod method = SamplerMethod::dopri5;
    int steps = 32;       // fixed-step methods
    double rtol = 1e-4;   // adaptive
    double atol = 1e-5;
    double cfg_scale = 1.0;
    std::uint64_t seed = 0;

    void validate() const {
        if (steps < 1) throw ConfigError("sampler steps must be >= 1");
        if (rtol <= 0 || atol <= 0) throw ConfigError("rtol and atol must be positive");
        if (cfg_scale < 0) throw ConfigError("cfg_scale must be >= 0");
    }
};

template <typename T>
using VelocityFn = std::function<Tensor<T>(const Tensor<T>&, T)>;

// ---------------------------------------------------------------------------
// classifier-free guidance

// v = v(null) + gamma * (v(cond) - v(null))
template <typename T>
Tensor<T> cfg_combine(const Tensor<T>& v_cond, const Tensor<T>& v_null, T gamma) {
    return add(v_null, scale(sub(v_cond, v_null), gamma));
}

// gamma 1 and 0 collapse to a single forward pass, so those cases are
// bitwise identical to the plain conditional/unconditional model.
template <typename T>
Tensor<T> cfg_velocity(const VelocityModel<T>& model, const Tensor<T>& x_t, T t,
                       const ConditionBundle<T>& bundle, T gamma) {
    if (gamma == T(1)) return model.forward(x_t, t, bundle);
    Tensor<T> v_null = model.forward(x_t, t, bundle.nulled());
    if (gamma == T(0)) return v_null;
    Tensor<T> v_cond = model.forward(x_t, t, bundle);
    return cfg_combine(v_cond, v_null, gamma);
}

template <typename T>
VelocityFn<T> make_cfg_velocity(const VelocityModel<T>& model, ConditionBundle<T> bundle, T gamma) {
    return [&model, bundle = std::move(bundle), gamma](const Tensor<T>& x, T t) {
        return cfg_velocity(model, x, t, bundle, gamma);
    };
}

// ---------------------------------------------------------------------------
// fixed-step integrators

template <typename T>
Tensor<T> integrate_fixed(const VelocityFn<T>& velocity, const Tensor<T>& x0,
                          const SamplerConfig& cfg) {
    cfg.validate();
    if (cfg.method == SamplerMethod::dopri5)
        throw ConfigError("integrate_fixed cannot run the adaptive method");
    NoGradGuard ng;
    const int n = cfg.steps;
    const T h = T(1) / static_cast<T>(n);
    Tensor<T> x = x0.clone();
    for (int i = 0; i < n; ++i) {
        const T t = static_cast<T>(i) * h;
        Tensor<T> next;
        switch (cfg.method) {
            case SamplerMethod::euler: {
                next = add(x, scale(velocity(x, t), h));
                break;
            }
            case SamplerMethod::midpoint: {
                Tensor<T> k1 = velocity(x, t);
                Tensor<T> xm = add(x, scale(k1, h / T(2)));
                next = add(x, scale(velocity(xm, t + h / T(2)), h));
                break;
            }
            case SamplerMethod::rk4: {
                Tensor<T> k1 = velocity(x, t);
                Tensor<T> k2 = velocity(add(x, scale(k1, h / T(2))), t + h / T(2));
                Tensor<T> k3 = velocity(add(x, scale(k2, h / T(2))), t + h / T(2));
                Tensor<T> k4 = velocity(add(x, scale(k3, h)), t + h);
                Tensor<T> sum = add(add(k1, k4), scale(add(k2, k3), T(2)));
                next = add(x, scale(sum, h / T(6)));
                break;
            }
            default: break;
        }
        x = next;
        if (!x.all_finite())
            throw NumericError("non-finite state after fixed step " + std::to_string(i));
    }
    return x;
}

// ---------------------------------------------------------------------------
// Dormand-Prince 5(4)

struct Dopri5Stats {
    int accepted = 0;
    int rejected = 0;
    long nfe = 0;
};

template <typename T>
Tensor<T> integrate_dopri5(const VelocityFn<T>& velocity, const Tensor<T>& x0,
                           const SamplerConfig& cfg, Dopri5Stats* stats = nullptr) {
    cfg.validate();
    NoGradGuard ng;

    // standard Dormand-Prince tableau
    static constexpr double a21 = 1.0 / 5;
    static constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
    static constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
    static constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561,
                            a54 = -212.0 / 729;
    static constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247,
                            a64 = 49.0 / 176, a65 = -5103.0 / 18656;
    static constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192,
                            b5 = -2187.0 / 6784, b6 = 11.0 / 84;
    static constexpr double e1 = b1 - 5179.0 / 57600, e3 = b3 - 7571.0 / 16695,
                            e4 = b4 - 393.0 / 640, e5 = b5 + 92097.0 / 339200,
                            e6 = b6 - 187.0 / 2100, e7 = -1.0 / 40;
    static constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;

    Dopri5Stats local;
    Dopri5Stats& st = stats ? *stats : local;

    const std::size_t n = x0.size();
    Tensor<T> y = x0.clone();
    double t = 0.0;
    const double t_end = 1.0;
    double h = t_end; // a constant field then lands in one accepted step
    double err_old = 1e-4;

    Tensor<T> k1 = velocity(y, static_cast<T>(t));
    st.nfe += 1;

    auto lincomb = [&](std::initializer_list<std::pair<double, const Tensor<T>*>> terms,
                       double hh) {
        Tensor<T> acc = y.clone();
        for (const auto& [coef, kp] : terms)
            kernels::active<T>().axpy(static_cast<T>(hh * coef), kp->data().data(),
                                      acc.data().data(), n);
        return acc;
    };

    while (t < t_end) {
        bool clamped = false;
        if (t + h >= t_end) {
            h = t_end - t;
            clamped = true;
        }
        if (h < 1e-10) throw NumericError("dopri5 step size underflow (stiffness) at t=" + std::to_string(t));

        Tensor<T> k2 = velocity(lincomb({{a21, &k1}}, h), static_cast<T>(t + c2 * h));
        Tensor<T> k3 = velocity(lincomb({{a31, &k1}, {a32, &k2}}, h), static_cast<T>(t + c3 * h));
        Tensor<T> k4 =
            velocity(lincomb({{a41, &k1}, {a42, &k2}, {a43, &k3}}, h), static_cast<T>(t + c4 * h));
        Tensor<T> k5 = velocity(lincomb({{a51, &k1}, {a52, &k2}, {a53, &k3}, {a54, &k4}}, h),
                                static_cast<T>(t + c5 * h));
        Tensor<T> k6 = velocity(
            lincomb({{a61, &k1}, {a62, &k2}, {a63, &k3}, {a64, &k4}, {a65, &k5}}, h),
            static_cast<T>(t + h));
        Tensor<T> y_new =
            lincomb({{b1, &k1}, {b3, &k3}, {b4, &k4}, {b5, &k5}, {b6, &k6}}, h);
        Tensor<T> k7 = velocity(y_new, static_cast<T>(t + h));
        st.nfe += 6;

        if (!y_new.all_finite())
            throw NumericError("non-finite state in dopri5 at t=" + std::to_string(t));

        // RMS of component errors scaled by atol + rtol * |y|
        double err_sq = 0.0;
        {
            const T* py = y.data().data();
            const T* p1 = k1.data().data();
            const T* p3 = k3.data().data();
            const T* p4 = k4.data().data();
            const T* p5 = k5.data().data();
            const T* p6 = k6.data().data();
            const T* p7 = k7.data().data();
            for (std::size_t i = 0; i < n; ++i) {
                const double e = h * (e1 * p1[i] + e3 * p3[i] + e4 * p4[i] + e5 * p5[i] +
                                      e6 * p6[i] + e7 * p7[i]);
                const double sc = cfg.atol + cfg.rtol * std::abs(static_cast<double>(py[i]));
                err_sq += (e / sc) * (e / sc);
            }
        }
        const double err = std::sqrt(err_sq / static_cast<double>(n));

        if (err <= 1.0) {
            t = clamped ? t_end : t + h;
            y = std::move(y_new);
            k1 = std::move(k7); // FSAL
            ++st.accepted;
            double fac = err == 0.0 ? 5.0
                                    : 0.9 * std::pow(err, -0.17) * std::pow(err_old, 0.04);
            fac = std::min(5.0, std::max(0.2, fac));
            err_old = std::max(err, 1e-4);
            h *= fac;
        } else {
            ++st.rejected;
            const double fac = std::min(0.9, std::max(0.2, 0.9 * std::pow(err, -0.2)));
            h *= fac;
        }
    }
    return y;
}

// ---------------------------------------------------------------------------
// model-facing entry point

template <typename T>
Tensor<T> sample_latent(const VelocityModel<T>& model, const ConditionBundle<T>& bundle,
                        const Tensor<T>& x0, const SamplerConfig& cfg) {
    NoGradGuard ng;
    VelocityFn<T> v = make_cfg_velocity(model, bundle, static_cast<T>(cfg.cfg_scale));
    if (cfg.method == SamplerMethod::dopri5) return integrate_dopri5(v, x0, cfg);
    return integrate_fixed(v, x0, cfg);
}

} // namespace flowsynth
