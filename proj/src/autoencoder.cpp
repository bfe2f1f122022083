#include "tumls/autoencoder.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <random>

#include "tumls/error.hpp"
#include "tumls/metrics.hpp"

namespace tumls::ae {

namespace ops {

namespace {

int conv_out_size(int in, int stride) { return (in + 2 * kPad - kKernel) / stride + 1; }

}  // namespace

Tensor conv_forward(const ConvLayer& L, const Tensor& x) {
    if (x.c != L.in_channels)
        throw DataError("conv input has " + std::to_string(x.c) + " channels, expected " +
                        std::to_string(L.in_channels));
    constexpr int K = kKernel;
    if (!L.transposed) {
        const int s = L.stride;
        const int ho = conv_out_size(x.h, s), wo = conv_out_size(x.w, s);
        Tensor y(x.n, L.out_channels, ho, wo);
        for (int n = 0; n < x.n; ++n) {
            for (int co = 0; co < L.out_channels; ++co) {
                double* out = y.ptr(n, co);
                std::fill(out, out + ho * wo, L.bias[co]);
                for (int ci = 0; ci < L.in_channels; ++ci) {
                    const double* in = x.ptr(n, ci);
                    for (int ky = 0; ky < K; ++ky) {
                        for (int kx = 0; kx < K; ++kx) {
                            const double wv = L.weight[((co * L.in_channels + ci) * K + ky) * K + kx];
                            for (int oy = 0; oy < ho; ++oy) {
                                const int iy = oy * s + ky - kPad;
                                if (iy < 0 || iy >= x.h) continue;
                                for (int ox = 0; ox < wo; ++ox) {
                                    const int ix = ox * s + kx - kPad;
                                    if (ix < 0 || ix >= x.w) continue;
                                    out[oy * wo + ox] += wv * in[iy * x.w + ix];
                                }
                            }
                        }
                    }
                }
            }
        }
        return y;
    }

    const int ho = 2 * x.h, wo = 2 * x.w;
    Tensor y(x.n, L.out_channels, ho, wo);
    for (int n = 0; n < x.n; ++n) {
        for (int co = 0; co < L.out_channels; ++co) {
            double* out = y.ptr(n, co);
            std::fill(out, out + ho * wo, L.bias[co]);
            for (int ci = 0; ci < L.in_channels; ++ci) {
                const double* in = x.ptr(n, ci);
                for (int ky = 0; ky < K; ++ky) {
                    for (int kx = 0; kx < K; ++kx) {
                        const double wv = L.weight[((ci * L.out_channels + co) * K + ky) * K + kx];
                        for (int iy = 0; iy < x.h; ++iy) {
                            const int oy = iy * 2 + ky - kPad;
                            if (oy < 0 || oy >= ho) continue;
                            for (int ix = 0; ix < x.w; ++ix) {
                                const int ox = ix * 2 + kx - kPad;
                                if (ox < 0 || ox >= wo) continue;
                                out[oy * wo + ox] += wv * in[iy * x.w + ix];
                            }
                        }
                    }
                }
            }
        }
    }
    return y;
}

Tensor conv_backward(const ConvLayer& L, const Tensor& x, const Tensor& g, ConvGrads& grads) {
    constexpr int K = kKernel;
    Tensor gx(x.n, x.c, x.h, x.w);
    for (int n = 0; n < g.n; ++n)
        for (int co = 0; co < g.c; ++co) {
            const double* go = g.ptr(n, co);
            double acc = 0.0;
            for (int i = 0; i < g.h * g.w; ++i) acc += go[i];
            grads.bias[co] += acc;
        }

    if (!L.transposed) {
        const int s = L.stride;
        for (int n = 0; n < x.n; ++n) {
            for (int co = 0; co < L.out_channels; ++co) {
                const double* go = g.ptr(n, co);
                for (int ci = 0; ci < L.in_channels; ++ci) {
                    const double* in = x.ptr(n, ci);
                    double* gin = gx.ptr(n, ci);
                    for (int ky = 0; ky < K; ++ky) {
                        for (int kx = 0; kx < K; ++kx) {
                            const std::size_t wi = ((co * L.in_channels + ci) * K + ky) * K + kx;
                            const double wv = L.weight[wi];
                            double gw = 0.0;
                            for (int oy = 0; oy < g.h; ++oy) {
                                const int iy = oy * s + ky - kPad;
                                if (iy < 0 || iy >= x.h) continue;
                                for (int ox = 0; ox < g.w; ++ox) {
                                    const int ix = ox * s + kx - kPad;
                                    if (ix < 0 || ix >= x.w) continue;
                                    const double gv = go[oy * g.w + ox];
                                    gw += gv * in[iy * x.w + ix];
                                    gin[iy * x.w + ix] += gv * wv;
                                }
                            }
                            grads.weight[wi] += gw;
                        }
                    }
                }
            }
        }
        return gx;
    }

    for (int n = 0; n < x.n; ++n) {
        for (int co = 0; co < L.out_channels; ++co) {
            const double* go = g.ptr(n, co);
            for (int ci = 0; ci < L.in_channels; ++ci) {
                const double* in = x.ptr(n, ci);
                double* gin = gx.ptr(n, ci);
                for (int ky = 0; ky < K; ++ky) {
                    for (int kx = 0; kx < K; ++kx) {
                        const std::size_t wi = ((ci * L.out_channels + co) * K + ky) * K + kx;
                        const double wv = L.weight[wi];
                        double gw = 0.0;
                        for (int iy = 0; iy < x.h; ++iy) {
                            const int oy = iy * 2 + ky - kPad;
                            if (oy < 0 || oy >= g.h) continue;
                            for (int ix = 0; ix < x.w; ++ix) {
                                const int ox = ix * 2 + kx - kPad;
                                if (ox < 0 || ox >= g.w) continue;
                                const double gv = go[oy * g.w + ox];
                                gw += gv * in[iy * x.w + ix];
                                gin[iy * x.w + ix] += gv * wv;
                            }
                        }
                        grads.weight[wi] += gw;
                    }
                }
            }
        }
    }
    return gx;
}

Tensor relu_forward(const Tensor& x) {
    Tensor y = x;
    for (double& v : y.data) v = v > 0.0 ? v : 0.0;
    return y;
}

Tensor relu_backward(const Tensor& x, const Tensor& g) {
    Tensor gx = g;
    for (std::size_t i = 0; i < gx.size(); ++i)
        if (!(x.data[i] > 0.0)) gx.data[i] = 0.0;
    return gx;
}

Tensor sigmoid_forward(const Tensor& x) {
    Tensor y = x;
    for (double& v : y.data) v = 1.0 / (1.0 + std::exp(-v));
    return y;
}

Tensor sigmoid_backward(const Tensor& y, const Tensor& g) {
    Tensor gx = g;
    for (std::size_t i = 0; i < gx.size(); ++i) gx.data[i] *= y.data[i] * (1.0 - y.data[i]);
    return gx;
}

}  // namespace ops

std::size_t AEModel::parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers) n += l.weight.size() + l.bias.size();
    return n;
}

AEModel make_model(const Architecture& arch, std::uint64_t seed) {
    if (arch.hidden.empty()) throw ConfigError("architecture needs at least one hidden layer");
    if (arch.input_size <= 0 || (arch.input_size % (1 << arch.hidden.size())) != 0)
        throw ConfigError("input size must be divisible by 2^(number of encoder layers)");

    AEModel m;
    m.arch = arch;
    m.input_mean.assign(arch.input_channels, 0.0);
    m.input_std.assign(arch.input_channels, 1.0);

    std::mt19937_64 rng(seed);
    auto add = [&](int cin, int cout, bool transposed) {
        ConvLayer l;
        l.in_channels = cin;
        l.out_channels = cout;
        l.stride = 2;
        l.transposed = transposed;
        l.weight.resize(static_cast<std::size_t>(cin) * cout * ops::kKernel * ops::kKernel);
        l.bias.assign(cout, 0.0);
        const double bound = std::sqrt(6.0 / (cin * ops::kKernel * ops::kKernel));
        std::uniform_real_distribution<double> dist(-bound, bound);
        for (double& w : l.weight) w = dist(rng);
        m.layers.push_back(std::move(l));
    };

    int prev = arch.input_channels;
    for (int h : arch.hidden) {
        add(prev, h, false);
        prev = h;
    }
    for (int i = static_cast<int>(arch.hidden.size()) - 2; i >= 0; --i) {
        add(prev, arch.hidden[i], true);
        prev = arch.hidden[i];
    }
    add(prev, arch.input_channels, true);
    return m;
}

namespace {

void check_input(const AEModel& m, const Tensor& x) {
    if (x.c != m.arch.input_channels || x.h != m.arch.input_size || x.w != m.arch.input_size)
        throw DataError("autoencoder expects " + std::to_string(m.arch.input_size) + "x" +
                        std::to_string(m.arch.input_size) + "x" +
                        std::to_string(m.arch.input_channels) + " input, got " +
                        std::to_string(x.h) + "x" + std::to_string(x.w) + "x" + std::to_string(x.c));
}

Tensor standardize(const AEModel& m, const Tensor& x) {
    Tensor z = x;
    const std::size_t plane = static_cast<std::size_t>(x.h) * x.w;
    for (int n = 0; n < x.n; ++n)
        for (int c = 0; c < x.c; ++c) {
            double* p = z.ptr(n, c);
            const double mu = m.input_mean[c], inv = 1.0 / m.input_std[c];
            for (std::size_t i = 0; i < plane; ++i) p[i] = (p[i] - mu) * inv;
        }
    return z;
}

}  // namespace

ForwardResult forward(const AEModel& m, const Tensor& batch) {
    check_input(m, batch);
    ForwardResult r;
    r.activations.reserve(m.layers.size() + 1);
    r.activations.push_back(standardize(m, batch));
    for (std::size_t i = 0; i < m.layers.size(); ++i) {
        Tensor z = ops::conv_forward(m.layers[i], r.activations.back());
        const bool last = i + 1 == m.layers.size();
        r.activations.push_back(last ? ops::sigmoid_forward(z) : ops::relu_forward(z));
    }
    r.latent = r.activations[m.num_encoder_layers()];
    r.reconstruction = r.activations.back();
    return r;
}

std::vector<std::vector<double>> flatten_latents(const Tensor& latent) {
    std::vector<std::vector<double>> out(latent.n);
    const std::size_t per = static_cast<std::size_t>(latent.c) * latent.h * latent.w;
    for (int n = 0; n < latent.n; ++n) {
        const double* p = latent.ptr(n, 0);
        out[n].assign(p, p + per);
    }
    return out;
}

double loss_mse(const Tensor& recon, const Tensor& target) {
    if (!recon.same_shape(target)) throw DataError("mse: shape mismatch");
    return metrics::mse(recon.data, target.data);
}

Gradients zero_gradients(const AEModel& m) {
    Gradients g(m.layers.size());
    for (std::size_t i = 0; i < m.layers.size(); ++i) {
        g[i].weight.assign(m.layers[i].weight.size(), 0.0);
        g[i].bias.assign(m.layers[i].bias.size(), 0.0);
    }
    return g;
}

Gradients backward(const AEModel& m, const Tensor& batch, double loss_scale, double* loss_out) {
    ForwardResult f = forward(m, batch);
    const double loss = loss_mse(f.reconstruction, batch);
    if (!std::isfinite(loss)) throw NumericError("training diverged");
    if (loss_out) *loss_out = loss;

    Tensor g(batch.n, batch.c, batch.h, batch.w);
    const double k = loss_scale * 2.0 / static_cast<double>(batch.size());
    for (std::size_t i = 0; i < g.size(); ++i)
        g.data[i] = k * (f.reconstruction.data[i] - batch.data[i]);

    Gradients grads = zero_gradients(m);
    for (std::size_t li = m.layers.size(); li-- > 0;) {
        const Tensor& out = f.activations[li + 1];
        g = li + 1 == m.layers.size() ? ops::sigmoid_backward(out, g) : ops::relu_backward(out, g);
        g = ops::conv_backward(m.layers[li], f.activations[li], g, grads[li]);
    }
    return grads;
}

void TrainConfig::validate() const {
    if (batch_size < 1) throw ConfigError("train.batch_size must be positive");
    if (!(learning_rate >= 0.0)) throw ConfigError("train.learning_rate must be non-negative");
    if (!(weight_decay >= 0.0)) throw ConfigError("train.weight_decay must be non-negative");
    if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0))
        throw ConfigError("train adam betas must lie in [0,1)");
    if (!(eps > 0.0)) throw ConfigError("train.eps must be positive");
    if (early_stop_patience < 1) throw ConfigError("train.early_stop_patience must be >= 1");
    if (max_epochs < 1) throw ConfigError("train.max_epochs must be >= 1");
}

nlohmann::json to_json(const TrainConfig& c) {
    return {{"batch_size", c.batch_size},
            {"learning_rate", c.learning_rate},
            {"weight_decay", c.weight_decay},
            {"beta1", c.beta1},
            {"beta2", c.beta2},
            {"eps", c.eps},
            {"early_stop_patience", c.early_stop_patience},
            {"max_epochs", c.max_epochs},
            {"rng_seed", c.rng_seed}};
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
    TrainConfig c;
    c.batch_size = j.value("batch_size", c.batch_size);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.weight_decay = j.value("weight_decay", c.weight_decay);
    c.beta1 = j.value("beta1", c.beta1);
    c.beta2 = j.value("beta2", c.beta2);
    c.eps = j.value("eps", c.eps);
    c.early_stop_patience = j.value("early_stop_patience", c.early_stop_patience);
    c.max_epochs = j.value("max_epochs", c.max_epochs);
    c.rng_seed = j.value("rng_seed", c.rng_seed);
    c.validate();
    return c;
}

AdamW::AdamW(const AEModel& model, const TrainConfig& cfg)
    : cfg_(cfg), m_(zero_gradients(model)), v_(zero_gradients(model)) {}

void AdamW::step(AEModel& model, const Gradients& grads) {
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    auto update = [&](std::vector<double>& p, const std::vector<double>& g, std::vector<double>& m,
                      std::vector<double>& v) {
        for (std::size_t i = 0; i < p.size(); ++i) {
            m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g[i];
            v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            p[i] -= cfg_.learning_rate * (mhat / (std::sqrt(vhat) + cfg_.eps) + cfg_.weight_decay * p[i]);
        }
    };
    for (std::size_t l = 0; l < model.layers.size(); ++l) {
        update(model.layers[l].weight, grads[l].weight, m_[l].weight, v_[l].weight);
        update(model.layers[l].bias, grads[l].bias, m_[l].bias, v_[l].bias);
    }
}

bool EarlyStopper::update(double valid_loss) {
    ++epoch_;
    if (epoch_ == 1 || valid_loss < best_) {
        best_ = valid_loss;
        best_epoch_ = epoch_;
        return true;
    }
    return false;
}

nlohmann::json to_json(const TrainHistory& h) {
    nlohmann::json epochs = nlohmann::json::array();
    for (const auto& e : h.epochs)
        epochs.push_back({{"epoch", e.epoch}, {"train_mse", e.train_mse}, {"valid_mse", e.valid_mse}});
    return {{"epochs", epochs},
            {"best_epoch", h.best_epoch},
            {"best_valid_mse", h.best_valid_mse},
            {"early_stopped", h.early_stopped}};
}

Tensor to_tensor(std::span<const cv::Mat> patches) {
    if (patches.empty()) return {};
    const int h = patches[0].rows, w = patches[0].cols;
    Tensor t(static_cast<int>(patches.size()), 3, h, w);
    for (std::size_t n = 0; n < patches.size(); ++n) {
        const cv::Mat& p = patches[n];
        if (p.type() != CV_8UC3 || p.rows != h || p.cols != w)
            throw DataError("patch " + std::to_string(n) + " has inconsistent size or type");
        for (int y = 0; y < h; ++y) {
            const auto* row = p.ptr<cv::Vec3b>(y);
            for (int x = 0; x < w; ++x)
                for (int c = 0; c < 3; ++c) t.at(static_cast<int>(n), c, y, x) = row[x][c] / 255.0;
        }
    }
    return t;
}

void fit_input_normalization(AEModel& m, const Tensor& train) {
    const std::size_t plane = static_cast<std::size_t>(train.h) * train.w;
    const double count = static_cast<double>(plane) * train.n;
    m.input_mean.assign(train.c, 0.0);
    m.input_std.assign(train.c, 1.0);
    for (int c = 0; c < train.c; ++c) {
        double s = 0.0, s2 = 0.0;
        for (int n = 0; n < train.n; ++n) {
            const double* p = train.ptr(n, c);
            for (std::size_t i = 0; i < plane; ++i) {
                s += p[i];
                s2 += p[i] * p[i];
            }
        }
        const double mu = s / count;
        const double var = std::max(0.0, s2 / count - mu * mu);
        m.input_mean[c] = mu;
        m.input_std[c] = std::max(std::sqrt(var), 1e-3);
    }
}

namespace {

Tensor gather(const Tensor& src, std::span<const std::size_t> idx) {
    Tensor t(static_cast<int>(idx.size()), src.c, src.h, src.w);
    const std::size_t per = static_cast<std::size_t>(src.c) * src.h * src.w;
    for (std::size_t i = 0; i < idx.size(); ++i)
        std::copy_n(src.data.begin() + idx[i] * per, per, t.data.begin() + i * per);
    return t;
}

double evaluate_mse(const AEModel& m, const Tensor& set) {
    constexpr std::size_t kChunk = 256;
    double acc = 0.0;
    std::vector<std::size_t> idx;
    for (std::size_t start = 0; start < static_cast<std::size_t>(set.n); start += kChunk) {
        idx.clear();
        for (std::size_t i = start; i < std::min<std::size_t>(set.n, start + kChunk); ++i) idx.push_back(i);
        Tensor b = gather(set, idx);
        acc += loss_mse(forward(m, b).reconstruction, b) * static_cast<double>(b.size());
    }
    return acc / static_cast<double>(set.size());
}

}  // namespace

TrainResult train(const AEModel& initial, const Tensor& train_set, const Tensor& valid_set,
                  const TrainConfig& cfg) {
    cfg.validate();
    if (train_set.n == 0) throw DataError("training set is empty");
    if (valid_set.n == 0) throw DataError("validation set is empty");

    AEModel model = initial;
    fit_input_normalization(model, train_set);
    AdamW opt(model, cfg);
    EarlyStopper stopper(cfg.early_stop_patience);
    std::mt19937_64 rng(cfg.rng_seed);

    TrainResult result{model, {}};
    std::vector<std::size_t> order(train_set.n);
    std::iota(order.begin(), order.end(), 0);
    const std::size_t bs = std::min<std::size_t>(cfg.batch_size, order.size());

    for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double acc = 0.0;
        for (std::size_t start = 0; start < order.size(); start += bs) {
            const std::size_t len = std::min(bs, order.size() - start);
            Tensor batch = gather(train_set, std::span(order).subspan(start, len));
            double loss = 0.0;
            Gradients g = backward(model, batch, 1.0, &loss);
            opt.step(model, g);
            acc += loss * static_cast<double>(len);
        }
        const double train_mse = acc / static_cast<double>(order.size());
        const double valid_mse = evaluate_mse(model, valid_set);
        if (!std::isfinite(train_mse) || !std::isfinite(valid_mse))
            throw NumericError("training diverged");
        result.history.epochs.push_back({epoch, train_mse, valid_mse});
        if (stopper.update(valid_mse)) result.best_model = model;
        if (stopper.should_stop()) {
            result.history.early_stopped = true;
            break;
        }
    }
    result.history.best_epoch = stopper.best_epoch();
    result.history.best_valid_mse = stopper.best_loss();
    return result;
}

DatasetSplit split_dataset(std::size_t n, std::uint64_t seed) {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    std::mt19937_64 rng(seed);
    std::shuffle(idx.begin(), idx.end(), rng);

    std::size_t n_train = static_cast<std::size_t>(std::llround(0.70 * static_cast<double>(n)));
    std::size_t n_valid = static_cast<std::size_t>(std::llround(0.15 * static_cast<double>(n)));
    if (n >= 2) {
        n_valid = std::max<std::size_t>(1, n_valid);
        n_train = std::clamp<std::size_t>(n_train, 1, n - n_valid);
    }
    DatasetSplit s;
    s.train.assign(idx.begin(), idx.begin() + n_train);
    s.valid.assign(idx.begin() + n_train, idx.begin() + n_train + n_valid);
    s.test.assign(idx.begin() + n_train + n_valid, idx.end());
    return s;
}

std::vector<std::vector<double>> embed(const AEModel& m, std::span<const cv::Mat> patches) {
    constexpr std::size_t kChunk = 256;
    std::vector<std::vector<double>> out;
    out.reserve(patches.size());
    for (std::size_t start = 0; start < patches.size(); start += kChunk) {
        const auto chunk = patches.subspan(start, std::min(kChunk, patches.size() - start));
        Tensor t = to_tensor(chunk);
        Tensor x = standardize(m, t);
        check_input(m, x);
        for (std::size_t i = 0; i < m.num_encoder_layers(); ++i)
            x = ops::relu_forward(ops::conv_forward(m.layers[i], x));
        for (auto& v : flatten_latents(x)) out.push_back(std::move(v));
    }
    return out;
}

namespace {

constexpr char kMagic[8] = {'T', 'U', 'M', 'L', 'S', 'A', 'E', '\0'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
T to_little(T v) {
    if constexpr (std::endian::native == std::endian::big) {
        auto bytes = std::bit_cast<std::array<unsigned char, sizeof(T)>>(v);
        std::reverse(bytes.begin(), bytes.end());
        return std::bit_cast<T>(bytes);
    }
    return v;
}

template <typename T>
void put(std::ostream& os, T v) {
    v = to_little(v);
    os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
T get(std::istream& is) {
    T v{};
    is.read(reinterpret_cast<char*>(&v), sizeof v);
    if (!is) throw DataError("checkpoint truncated");
    return to_little(v);
}

void put_doubles(std::ostream& os, const std::vector<double>& v) {
    put<std::uint64_t>(os, v.size());
    for (double d : v) put(os, d);
}

std::vector<double> get_doubles(std::istream& is, std::size_t expected) {
    const auto n = get<std::uint64_t>(is);
    if (n != expected) throw DataError("checkpoint tensor size mismatch");
    std::vector<double> v(n);
    for (double& d : v) d = get<double>(is);
    return v;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const AEModel& m) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError("cannot write checkpoint " + path.string());
    os.write(kMagic, sizeof kMagic);
    put(os, kVersion);
    put<std::uint32_t>(os, m.arch.input_channels);
    put<std::uint32_t>(os, m.arch.input_size);
    put<std::uint32_t>(os, static_cast<std::uint32_t>(m.arch.hidden.size()));
    for (int h : m.arch.hidden) put<std::uint32_t>(os, h);
    put_doubles(os, m.input_mean);
    put_doubles(os, m.input_std);
    put<std::uint32_t>(os, static_cast<std::uint32_t>(m.layers.size()));
    for (const auto& l : m.layers) {
        put<std::uint32_t>(os, l.in_channels);
        put<std::uint32_t>(os, l.out_channels);
        put<std::uint32_t>(os, l.stride);
        put<std::uint32_t>(os, l.transposed ? 1 : 0);
        put_doubles(os, l.weight);
        put_doubles(os, l.bias);
    }
}

AEModel load_checkpoint(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("cannot open checkpoint " + path.string());
    char magic[8];
    is.read(magic, sizeof magic);
    if (!is || std::memcmp(magic, kMagic, sizeof magic) != 0)
        throw DataError("not a tumls checkpoint: " + path.string());
    if (get<std::uint32_t>(is) != kVersion) throw DataError("unsupported checkpoint version");

    Architecture arch;
    arch.input_channels = static_cast<int>(get<std::uint32_t>(is));
    arch.input_size = static_cast<int>(get<std::uint32_t>(is));
    arch.hidden.resize(get<std::uint32_t>(is));
    for (int& h : arch.hidden) h = static_cast<int>(get<std::uint32_t>(is));

    AEModel m = make_model(arch, 0);
    m.input_mean = get_doubles(is, arch.input_channels);
    m.input_std = get_doubles(is, arch.input_channels);
    if (get<std::uint32_t>(is) != m.layers.size()) throw DataError("checkpoint layer count mismatch");
    for (auto& l : m.layers) {
        const auto cin = get<std::uint32_t>(is);
        const auto cout = get<std::uint32_t>(is);
        const auto stride = get<std::uint32_t>(is);
        const bool transposed = get<std::uint32_t>(is) != 0;
        if (static_cast<int>(cin) != l.in_channels || static_cast<int>(cout) != l.out_channels ||
            static_cast<int>(stride) != l.stride || transposed != l.transposed)
            throw DataError("checkpoint layer shape mismatch");
        l.weight = get_doubles(is, l.weight.size());
        l.bias = get_doubles(is, l.bias.size());
    }
    return m;
}

}  // namespace tumls::ae
