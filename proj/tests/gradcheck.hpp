#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "tumls/autoencoder.hpp"

namespace test {

/// |a - n| / max(|a|, |n|, floor), the usual elementwise relative error.
inline double rel_error(double a, double n, double floor = 1e-8) {
    return std::abs(a - n) / std::max({std::abs(a), std::abs(n), floor});
}

/// Central difference of f with respect to every element of params.
inline std::vector<double> numeric_grad(std::vector<double>& params, const std::function<double()>& f,
                                        double h = 1e-4) {
    std::vector<double> g(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double keep = params[i];
        params[i] = keep + h;
        const double up = f();
        params[i] = keep - h;
        const double down = f();
        params[i] = keep;
        g[i] = (up - down) / (2 * h);
    }
    return g;
}

inline double max_rel_error(const std::vector<double>& a, const std::vector<double>& n) {
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, rel_error(a[i], n[i]));
    return worst;
}

inline tumls::ae::Tensor random_tensor(int n, int c, int h, int w, std::uint64_t seed, double lo = -1.0,
                                       double hi = 1.0) {
    tumls::ae::Tensor t(n, c, h, w);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> d(lo, hi);
    for (double& v : t.data) v = d(rng);
    return t;
}

inline double dot(const tumls::ae::Tensor& a, const tumls::ae::Tensor& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a.data[i] * b.data[i];
    return s;
}

/// Worst relative error over input, weight and bias gradients of one conv layer
/// under the scalar objective sum(upstream * conv(x)).
inline double conv_layer_check(tumls::ae::ConvLayer layer, tumls::ae::Tensor x, std::uint64_t seed) {
    using namespace tumls::ae;
    const Tensor y0 = ops::conv_forward(layer, x);
    const Tensor up = random_tensor(y0.n, y0.c, y0.h, y0.w, seed + 1);
    ConvGrads grads{std::vector<double>(layer.weight.size()), std::vector<double>(layer.bias.size())};
    const Tensor gx = ops::conv_backward(layer, x, up, grads);
    auto f = [&] { return dot(ops::conv_forward(layer, x), up); };
    double worst = max_rel_error(gx.data, numeric_grad(x.data, f));
    worst = std::max(worst, max_rel_error(grads.weight, numeric_grad(layer.weight, f)));
    worst = std::max(worst, max_rel_error(grads.bias, numeric_grad(layer.bias, f)));
    return worst;
}

/// Worst relative error over every parameter of a whole model under loss_scale * MSE.
inline double model_check(tumls::ae::AEModel model, const tumls::ae::Tensor& batch) {
    using namespace tumls::ae;
    const Gradients g = backward(model, batch);
    double worst = 0.0;
    auto f = [&] { return loss_mse(forward(model, batch).reconstruction, batch); };
    for (std::size_t l = 0; l < model.layers.size(); ++l) {
        worst = std::max(worst, max_rel_error(g[l].weight, numeric_grad(model.layers[l].weight, f)));
        worst = std::max(worst, max_rel_error(g[l].bias, numeric_grad(model.layers[l].bias, f)));
    }
    return worst;
}

/// Replaces the zero initial biases so no ReLU input sits exactly on the kink.
inline void randomize_biases(tumls::ae::AEModel& model, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> d(0.05, 0.5);
    for (auto& l : model.layers)
        for (double& b : l.bias) b = d(rng);
}

inline tumls::ae::ConvLayer random_layer(int cin, int cout, bool transposed, std::uint64_t seed) {
    tumls::ae::ConvLayer l;
    l.in_channels = cin;
    l.out_channels = cout;
    l.transposed = transposed;
    l.weight.resize(static_cast<std::size_t>(cin) * cout * 9);
    l.bias.resize(cout);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> d(-0.5, 0.5);
    for (double& w : l.weight) w = d(rng);
    for (double& b : l.bias) b = d(rng);
    return l;
}

}  // namespace test
