#pragma once

#include <cmath>
#include <cstdint>

#include "flowsynth/flowmatch.hpp"
#include "flowsynth/rng.hpp"
#include "flowsynth/tensor.hpp"

// Minimal 1-D conditional flow-matching setup: a two-layer velocity network
// v(x, t) trained to transport N(0,1) onto a target Gaussian. Small enough
// that the learned field can be compared against the closed-form marginal
// velocity.

namespace flowsynth {

template <typename T>
class Transport1D {
public:
    Transport1D(std::size_t hidden, Rng rng) {
        w1_ = Tensor<T>::randn({2, hidden}, rng, T(0.7), true);
        b1_ = Tensor<T>::zeros({hidden}, true);
        w2_ = Tensor<T>::randn({hidden, 1}, rng, T(1) / std::sqrt(static_cast<T>(hidden)), true);
        b2_ = Tensor<T>::zeros({1}, true);
    }

    // features [n, 2] = (x, t) rows -> velocity [n, 1]
    Tensor<T> forward(const Tensor<T>& features) const {
        return add(matmul(gelu(add(matmul(features, w1_), b1_)), w2_), b2_);
    }

    Tensor<T> velocity(const Tensor<T>& x, T t) const {
        const std::size_t n = x.dim(0);
        std::vector<T> feat(n * 2);
        auto px = x.data();
        for (std::size_t i = 0; i < n; ++i) {
            feat[2 * i] = px[i];
            feat[2 * i + 1] = t;
        }
        return forward(Tensor<T>::from_data({n, 2}, std::move(feat)));
    }

    std::vector<std::pair<std::string, Tensor<T>>> named_parameters() const {
        return {{"w1", w1_}, {"b1", b1_}, {"w2", w2_}, {"b2", b2_}};
    }

private:
    Tensor<T> w1_, b1_, w2_, b2_;
};

struct Transport1DTarget {
    double mean = 2.0;
    double stddev = 0.5;
};

// Trains on independent (x0, x1) pairs with per-sample times; returns the
// final batch loss and optionally the whole loss trajectory.
template <typename T>
T train_transport_1d(Transport1D<T>& model, const Transport1DTarget& target, long steps,
                     std::size_t batch, T lr, Rng& rng, std::vector<T>* loss_history = nullptr) {
    AdamwConfig<T> opt_cfg;
    opt_cfg.weight_decay = T(0);
    AdamW<T> opt(model.named_parameters(), opt_cfg);
    T last = T(0);
    for (long s = 0; s < steps; ++s) {
        std::vector<T> feat(batch * 2), tgt(batch);
        for (std::size_t i = 0; i < batch; ++i) {
            const T x0 = static_cast<T>(rng.normal());
            const T x1 = static_cast<T>(target.mean + target.stddev * rng.normal());
            const T t = static_cast<T>(rng.uniform());
            feat[2 * i] = (T(1) - t) * x0 + t * x1;
            feat[2 * i + 1] = t;
            tgt[i] = x1 - x0;
        }
        Tensor<T> pred = model.forward(Tensor<T>::from_data({batch, 2}, std::move(feat)));
        Tensor<T> loss = fm_loss(pred, Tensor<T>::from_data({batch, 1}, std::move(tgt)));
        last = loss.item();
        if (loss_history) loss_history->push_back(last);
        backward(loss);
        opt.step(lr);
        opt.zero_grad();
    }
    return last;
}

// Closed-form marginal velocity of the linear-Gaussian path
// x_t = (1-t) x0 + t x1 with x0 ~ N(0,1) and x1 ~ N(mean, stddev^2):
// the conditional expectation E[x1 - x0 | x_t = x] is linear in x.
inline double transport1d_marginal_velocity(double x, double t, const Transport1DTarget& target) {
    const double var1 = target.stddev * target.stddev;
    const double var_t = (1.0 - t) * (1.0 - t) + t * t * var1;
    const double cov = t * var1 - (1.0 - t);
    return target.mean + cov / var_t * (x - t * target.mean);
}

} // namespace flowsynth
