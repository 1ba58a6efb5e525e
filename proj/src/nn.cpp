#include "fairprior/nn.hpp"

#include <Eigen/Core>

#include <cmath>
#include <cstring>

namespace fairprior {
namespace nn {

using MatRM = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapRM = Eigen::Map<MatRM>;
using CMapRM = Eigen::Map<const MatRM>;

namespace {

int conv_out_side(int in, int k, int stride, int pad) {
    return (in + 2 * pad - k) / stride + 1;
}

// Uniform fan-in-scaled init for weights and biases.
void init_fan_in(std::vector<float>& w, std::vector<float>& b, int fan_in, Rng& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (auto& v : w) v = static_cast<float>(rng.uniform(-bound, bound));
    for (auto& v : b) v = static_cast<float>(rng.uniform(-bound, bound));
}

// Gathers one image's patches into cols [OH*OW, C*k*k].
void im2col(const float* img, int c, int h, int w, int k, int stride, int pad, int oh, int ow,
            float* cols) {
    const int patch = c * k * k;
    for (int oy = 0; oy < oh; ++oy) {
        for (int ox = 0; ox < ow; ++ox) {
            float* dst = cols + (static_cast<int64_t>(oy) * ow + ox) * patch;
            const int iy0 = oy * stride - pad;
            const int ix0 = ox * stride - pad;
            for (int ch = 0; ch < c; ++ch) {
                const float* src = img + static_cast<int64_t>(ch) * h * w;
                for (int ky = 0; ky < k; ++ky) {
                    const int iy = iy0 + ky;
                    for (int kx = 0; kx < k; ++kx) {
                        const int ix = ix0 + kx;
                        *dst++ = (iy >= 0 && iy < h && ix >= 0 && ix < w)
                                     ? src[static_cast<int64_t>(iy) * w + ix]
                                     : 0.0f;
                    }
                }
            }
        }
    }
}

// Scatter-adds cols gradients back onto the input image.
void col2im(const float* cols, int c, int h, int w, int k, int stride, int pad, int oh, int ow,
            float* img) {
    const int patch = c * k * k;
    for (int oy = 0; oy < oh; ++oy) {
        for (int ox = 0; ox < ow; ++ox) {
            const float* src = cols + (static_cast<int64_t>(oy) * ow + ox) * patch;
            const int iy0 = oy * stride - pad;
            const int ix0 = ox * stride - pad;
            for (int ch = 0; ch < c; ++ch) {
                float* dst = img + static_cast<int64_t>(ch) * h * w;
                for (int ky = 0; ky < k; ++ky) {
                    const int iy = iy0 + ky;
                    for (int kx = 0; kx < k; ++kx) {
                        const int ix = ix0 + kx;
                        const float v = *src++;
                        if (iy >= 0 && iy < h && ix >= 0 && ix < w)
                            dst[static_cast<int64_t>(iy) * w + ix] += v;
                    }
                }
            }
        }
    }
}

}  // namespace

// ---------------------------------------------------------------- Conv2d

Conv2d::Conv2d(int in_c, int out_c, int kernel, int stride, int pad, Rng& init_rng)
    : in_c_(in_c), out_c_(out_c), k_(kernel), stride_(stride), pad_(pad) {
    if (in_c <= 0 || out_c <= 0 || kernel <= 0 || stride <= 0 || pad < 0)
        throw ConfigError("conv2d: non-positive dimension");
    w_.resize(static_cast<size_t>(out_c) * in_c * kernel * kernel);
    b_.resize(static_cast<size_t>(out_c));
    gw_.assign(w_.size(), 0.0f);
    gb_.assign(b_.size(), 0.0f);
    init_fan_in(w_, b_, in_c * kernel * kernel, init_rng);
}

Tensor Conv2d::forward(const Tensor& x, bool /*train*/) {
    if (x.rank() != 4 || x.dim(1) != in_c_)
        throw InputError("conv2d: expected NCHW input with " + std::to_string(in_c_) +
                         " channels, got " + x.shape_str());
    const int n = x.dim(0), h = x.dim(2), w = x.dim(3);
    const int oh = conv_out_side(h, k_, stride_, pad_);
    const int ow = conv_out_side(w, k_, stride_, pad_);
    const int patch = in_c_ * k_ * k_;

    x_cache_ = x;
    Tensor out({n, out_c_, oh, ow});
    std::vector<float> cols(static_cast<size_t>(oh) * ow * patch);
    CMapRM wm(w_.data(), out_c_, patch);

    for (int i = 0; i < n; ++i) {
        im2col(x.ptr() + static_cast<int64_t>(i) * in_c_ * h * w, in_c_, h, w, k_, stride_, pad_,
               oh, ow, cols.data());
        MapRM colm(cols.data(), static_cast<int64_t>(oh) * ow, patch);
        // y [OHW, out_c] then transpose-copy into NCHW layout
        MatRM y = colm * wm.transpose();
        float* dst = out.ptr() + static_cast<int64_t>(i) * out_c_ * oh * ow;
        for (int oc = 0; oc < out_c_; ++oc) {
            const float bias = b_[static_cast<size_t>(oc)];
            for (int64_t p = 0; p < static_cast<int64_t>(oh) * ow; ++p)
                dst[static_cast<int64_t>(oc) * oh * ow + p] = y(p, oc) + bias;
        }
    }
    return out;
}

Tensor Conv2d::backward(const Tensor& grad_out) {
    const Tensor& x = x_cache_;
    const int n = x.dim(0), h = x.dim(2), w = x.dim(3);
    const int oh = grad_out.dim(2), ow = grad_out.dim(3);
    const int patch = in_c_ * k_ * k_;
    const int64_t ohw = static_cast<int64_t>(oh) * ow;

    Tensor dx(x.shape);
    std::vector<float> cols(static_cast<size_t>(ohw) * patch);
    std::vector<float> dy(static_cast<size_t>(ohw) * out_c_);
    std::vector<float> dcols(static_cast<size_t>(ohw) * patch);
    MapRM gwm(gw_.data(), out_c_, patch);
    CMapRM wm(w_.data(), out_c_, patch);

    for (int i = 0; i < n; ++i) {
        // rebuild patches (cheaper than caching them across the batch)
        im2col(x.ptr() + static_cast<int64_t>(i) * in_c_ * h * w, in_c_, h, w, k_, stride_, pad_,
               oh, ow, cols.data());
        const float* g = grad_out.ptr() + static_cast<int64_t>(i) * out_c_ * ohw;
        for (int oc = 0; oc < out_c_; ++oc) {
            double s = 0.0;
            for (int64_t p = 0; p < ohw; ++p) {
                const float v = g[static_cast<int64_t>(oc) * ohw + p];
                dy[static_cast<size_t>(p) * out_c_ + oc] = v;
                s += v;
            }
            gb_[static_cast<size_t>(oc)] += static_cast<float>(s);
        }
        MapRM dym(dy.data(), ohw, out_c_);
        MapRM colm(cols.data(), ohw, patch);
        gwm.noalias() += dym.transpose() * colm;
        MapRM dcolm(dcols.data(), ohw, patch);
        dcolm.noalias() = dym * wm;
        col2im(dcols.data(), in_c_, h, w, k_, stride_, pad_, oh, ow,
               dx.ptr() + static_cast<int64_t>(i) * in_c_ * h * w);
    }
    return dx;
}

std::vector<ParamView> Conv2d::params() {
    return {{w_.data(), gw_.data(), static_cast<int64_t>(w_.size())},
            {b_.data(), gb_.data(), static_cast<int64_t>(b_.size())}};
}

// ------------------------------------------------------------ BatchNorm2d

BatchNorm2d::BatchNorm2d(int channels, double momentum, double eps)
    : c_(channels), momentum_(momentum), eps_(eps) {
    if (channels <= 0) throw ConfigError("batchnorm: non-positive channel count");
    gamma_.assign(static_cast<size_t>(c_), 1.0f);
    beta_.assign(static_cast<size_t>(c_), 0.0f);
    ggamma_.assign(static_cast<size_t>(c_), 0.0f);
    gbeta_.assign(static_cast<size_t>(c_), 0.0f);
    running_mean_.assign(static_cast<size_t>(c_), 0.0f);
    running_var_.assign(static_cast<size_t>(c_), 1.0f);
}

Tensor BatchNorm2d::forward(const Tensor& x, bool train) {
    if (x.rank() != 4 || x.dim(1) != c_) throw InputError("batchnorm: bad input " + x.shape_str());
    const int n = x.dim(0), h = x.dim(2), w = x.dim(3);
    const int64_t hw = static_cast<int64_t>(h) * w;
    const int64_t m = static_cast<int64_t>(n) * hw;
    Tensor out(x.shape);
    last_train_ = train;

    if (train) {
        mean_.assign(static_cast<size_t>(c_), 0.0f);
        invstd_.assign(static_cast<size_t>(c_), 0.0f);
        xhat_cache_ = Tensor(x.shape);
        for (int ch = 0; ch < c_; ++ch) {
            double sum = 0.0, sq = 0.0;
            for (int i = 0; i < n; ++i) {
                const float* p = x.ptr() + (static_cast<int64_t>(i) * c_ + ch) * hw;
                for (int64_t j = 0; j < hw; ++j) {
                    sum += p[j];
                    sq += static_cast<double>(p[j]) * p[j];
                }
            }
            const double mean = sum / static_cast<double>(m);
            const double var = sq / static_cast<double>(m) - mean * mean;  // biased
            const double invstd = 1.0 / std::sqrt(var + eps_);
            mean_[static_cast<size_t>(ch)] = static_cast<float>(mean);
            invstd_[static_cast<size_t>(ch)] = static_cast<float>(invstd);
            const double unbiased = m > 1 ? var * static_cast<double>(m) / (m - 1) : var;
            running_mean_[static_cast<size_t>(ch)] = static_cast<float>(
                (1.0 - momentum_) * running_mean_[static_cast<size_t>(ch)] + momentum_ * mean);
            running_var_[static_cast<size_t>(ch)] = static_cast<float>(
                (1.0 - momentum_) * running_var_[static_cast<size_t>(ch)] + momentum_ * unbiased);
            const float g = gamma_[static_cast<size_t>(ch)], be = beta_[static_cast<size_t>(ch)];
            for (int i = 0; i < n; ++i) {
                const int64_t off = (static_cast<int64_t>(i) * c_ + ch) * hw;
                const float* p = x.ptr() + off;
                float* xh = xhat_cache_.ptr() + off;
                float* q = out.ptr() + off;
                for (int64_t j = 0; j < hw; ++j) {
                    const float v = static_cast<float>((p[j] - mean) * invstd);
                    xh[j] = v;
                    q[j] = g * v + be;
                }
            }
        }
    } else {
        x_eval_cache_ = x;
        for (int ch = 0; ch < c_; ++ch) {
            const double mean = running_mean_[static_cast<size_t>(ch)];
            const double invstd = 1.0 / std::sqrt(running_var_[static_cast<size_t>(ch)] + eps_);
            const float g = gamma_[static_cast<size_t>(ch)], be = beta_[static_cast<size_t>(ch)];
            for (int i = 0; i < n; ++i) {
                const int64_t off = (static_cast<int64_t>(i) * c_ + ch) * hw;
                const float* p = x.ptr() + off;
                float* q = out.ptr() + off;
                for (int64_t j = 0; j < hw; ++j)
                    q[j] = static_cast<float>(g * (p[j] - mean) * invstd + be);
            }
        }
    }
    return out;
}

Tensor BatchNorm2d::backward(const Tensor& grad_out) {
    const int n = grad_out.dim(0), h = grad_out.dim(2), w = grad_out.dim(3);
    const int64_t hw = static_cast<int64_t>(h) * w;
    const int64_t m = static_cast<int64_t>(n) * hw;
    Tensor dx(grad_out.shape);

    if (!last_train_) {
        for (int ch = 0; ch < c_; ++ch) {
            const double invstd = 1.0 / std::sqrt(running_var_[static_cast<size_t>(ch)] + eps_);
            const double mean = running_mean_[static_cast<size_t>(ch)];
            const float g = gamma_[static_cast<size_t>(ch)];
            double dg = 0.0, db = 0.0;
            for (int i = 0; i < n; ++i) {
                const int64_t off = (static_cast<int64_t>(i) * c_ + ch) * hw;
                const float* go = grad_out.ptr() + off;
                const float* p = x_eval_cache_.ptr() + off;
                float* q = dx.ptr() + off;
                for (int64_t j = 0; j < hw; ++j) {
                    q[j] = static_cast<float>(go[j] * g * invstd);
                    dg += go[j] * (p[j] - mean) * invstd;
                    db += go[j];
                }
            }
            ggamma_[static_cast<size_t>(ch)] += static_cast<float>(dg);
            gbeta_[static_cast<size_t>(ch)] += static_cast<float>(db);
        }
        return dx;
    }

    for (int ch = 0; ch < c_; ++ch) {
        double sum_dy = 0.0, sum_dy_xhat = 0.0;
        for (int i = 0; i < n; ++i) {
            const int64_t off = (static_cast<int64_t>(i) * c_ + ch) * hw;
            const float* go = grad_out.ptr() + off;
            const float* xh = xhat_cache_.ptr() + off;
            for (int64_t j = 0; j < hw; ++j) {
                sum_dy += go[j];
                sum_dy_xhat += static_cast<double>(go[j]) * xh[j];
            }
        }
        ggamma_[static_cast<size_t>(ch)] += static_cast<float>(sum_dy_xhat);
        gbeta_[static_cast<size_t>(ch)] += static_cast<float>(sum_dy);
        const double g = gamma_[static_cast<size_t>(ch)];
        const double invstd = invstd_[static_cast<size_t>(ch)];
        const double scale = g * invstd / static_cast<double>(m);
        for (int i = 0; i < n; ++i) {
            const int64_t off = (static_cast<int64_t>(i) * c_ + ch) * hw;
            const float* go = grad_out.ptr() + off;
            const float* xh = xhat_cache_.ptr() + off;
            float* q = dx.ptr() + off;
            for (int64_t j = 0; j < hw; ++j)
                q[j] = static_cast<float>(scale *
                                          (m * go[j] - sum_dy - static_cast<double>(xh[j]) * sum_dy_xhat));
        }
    }
    return dx;
}

std::vector<ParamView> BatchNorm2d::params() {
    return {{gamma_.data(), ggamma_.data(), static_cast<int64_t>(gamma_.size())},
            {beta_.data(), gbeta_.data(), static_cast<int64_t>(beta_.size())}};
}

std::vector<ParamView> BatchNorm2d::buffers() {
    return {{running_mean_.data(), nullptr, static_cast<int64_t>(running_mean_.size())},
            {running_var_.data(), nullptr, static_cast<int64_t>(running_var_.size())}};
}

// ------------------------------------------------------------------ Dense

Dense::Dense(int in_dim, int out_dim, Rng& init_rng) : in_(in_dim), out_(out_dim) {
    if (in_dim <= 0 || out_dim <= 0) throw ConfigError("dense: non-positive dimension");
    w_.resize(static_cast<size_t>(out_) * in_);
    b_.resize(static_cast<size_t>(out_));
    gw_.assign(w_.size(), 0.0f);
    gb_.assign(b_.size(), 0.0f);
    init_fan_in(w_, b_, in_, init_rng);
}

Tensor Dense::forward(const Tensor& x, bool /*train*/) {
    if (x.rank() != 2 || x.dim(1) != in_)
        throw InputError("dense: expected [N," + std::to_string(in_) + "], got " + x.shape_str());
    const int n = x.dim(0);
    x_cache_ = x;
    Tensor out({n, out_});
    CMapRM xm(x.ptr(), n, in_);
    CMapRM wm(w_.data(), out_, in_);
    MapRM om(out.ptr(), n, out_);
    om.noalias() = xm * wm.transpose();
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < out_; ++j) om(i, j) += b_[static_cast<size_t>(j)];
    return out;
}

Tensor Dense::backward(const Tensor& grad_out) {
    const int n = grad_out.dim(0);
    Tensor dx({n, in_});
    CMapRM gm(grad_out.ptr(), n, out_);
    CMapRM xm(x_cache_.ptr(), n, in_);
    CMapRM wm(w_.data(), out_, in_);
    MapRM gwm(gw_.data(), out_, in_);
    MapRM dxm(dx.ptr(), n, in_);
    gwm.noalias() += gm.transpose() * xm;
    for (int j = 0; j < out_; ++j) {
        double s = 0.0;
        for (int i = 0; i < n; ++i) s += gm(i, j);
        gb_[static_cast<size_t>(j)] += static_cast<float>(s);
    }
    dxm.noalias() = gm * wm;
    return dx;
}

std::vector<ParamView> Dense::params() {
    return {{w_.data(), gw_.data(), static_cast<int64_t>(w_.size())},
            {b_.data(), gb_.data(), static_cast<int64_t>(b_.size())}};
}

// ------------------------------------------------------------ activations

Tensor ReLU::forward(const Tensor& x, bool /*train*/) {
    x_cache_ = x;
    Tensor out(x.shape);
    for (int64_t i = 0; i < x.numel(); ++i) out.data[static_cast<size_t>(i)] = std::max(0.0f, x.data[static_cast<size_t>(i)]);
    return out;
}

Tensor ReLU::backward(const Tensor& grad_out) {
    Tensor dx(grad_out.shape);
    for (int64_t i = 0; i < grad_out.numel(); ++i)
        dx.data[static_cast<size_t>(i)] =
            x_cache_.data[static_cast<size_t>(i)] > 0.0f ? grad_out.data[static_cast<size_t>(i)] : 0.0f;
    return dx;
}

Tensor LeakyReLU::forward(const Tensor& x, bool /*train*/) {
    x_cache_ = x;
    Tensor out(x.shape);
    for (int64_t i = 0; i < x.numel(); ++i) {
        const float v = x.data[static_cast<size_t>(i)];
        out.data[static_cast<size_t>(i)] = v > 0.0f ? v : slope_ * v;
    }
    return out;
}

Tensor LeakyReLU::backward(const Tensor& grad_out) {
    Tensor dx(grad_out.shape);
    for (int64_t i = 0; i < grad_out.numel(); ++i)
        dx.data[static_cast<size_t>(i)] =
            grad_out.data[static_cast<size_t>(i)] *
            (x_cache_.data[static_cast<size_t>(i)] > 0.0f ? 1.0f : slope_);
    return dx;
}

Tensor Sigmoid::forward(const Tensor& x, bool /*train*/) {
    Tensor out(x.shape);
    for (int64_t i = 0; i < x.numel(); ++i) {
        const float v = x.data[static_cast<size_t>(i)];
        out.data[static_cast<size_t>(i)] = 1.0f / (1.0f + std::exp(-v));
    }
    y_cache_ = out;
    return out;
}

Tensor Sigmoid::backward(const Tensor& grad_out) {
    Tensor dx(grad_out.shape);
    for (int64_t i = 0; i < grad_out.numel(); ++i) {
        const float y = y_cache_.data[static_cast<size_t>(i)];
        dx.data[static_cast<size_t>(i)] = grad_out.data[static_cast<size_t>(i)] * y * (1.0f - y);
    }
    return dx;
}

Tensor Flatten::forward(const Tensor& x, bool /*train*/) {
    in_shape_ = x.shape;
    int64_t d = 1;
    for (int i = 1; i < x.rank(); ++i) d *= x.dim(i);
    Tensor out({x.dim(0), static_cast<int>(d)}, x.data);
    return out;
}

Tensor Flatten::backward(const Tensor& grad_out) {
    return Tensor(in_shape_, grad_out.data);
}

// ------------------------------------------------------------- Sequential

Tensor Sequential::forward(const Tensor& x, bool train) {
    Tensor cur = x;
    for (auto& l : layers_) cur = l->forward(cur, train);
    return cur;
}

Tensor Sequential::backward(const Tensor& grad_out) {
    Tensor cur = grad_out;
    for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) cur = (*it)->backward(cur);
    return cur;
}

std::vector<ParamView> Sequential::params() {
    std::vector<ParamView> out;
    for (auto& l : layers_)
        for (auto& p : l->params()) out.push_back(p);
    return out;
}

std::vector<ParamView> Sequential::buffers() {
    std::vector<ParamView> out;
    for (auto& l : layers_)
        for (auto& p : l->buffers()) out.push_back(p);
    return out;
}

int64_t Sequential::param_count() {
    int64_t n = 0;
    for (auto& p : params()) n += p.size;
    return n;
}

void Sequential::zero_grads() {
    for (auto& p : params()) std::memset(p.grad, 0, static_cast<size_t>(p.size) * sizeof(float));
}

std::vector<float> Sequential::flat_params() {
    std::vector<float> out;
    for (auto& p : params()) out.insert(out.end(), p.value, p.value + p.size);
    return out;
}

void Sequential::set_flat_params(const std::vector<float>& flat) {
    size_t off = 0;
    for (auto& p : params()) {
        if (off + static_cast<size_t>(p.size) > flat.size())
            throw CompatibilityError("parameter blob shorter than network layout");
        std::memcpy(p.value, flat.data() + off, static_cast<size_t>(p.size) * sizeof(float));
        off += static_cast<size_t>(p.size);
    }
    if (off != flat.size()) throw CompatibilityError("parameter blob longer than network layout");
}

std::vector<float> Sequential::flat_buffers() {
    std::vector<float> out;
    for (auto& p : buffers()) out.insert(out.end(), p.value, p.value + p.size);
    return out;
}

void Sequential::set_flat_buffers(const std::vector<float>& flat) {
    size_t off = 0;
    for (auto& p : buffers()) {
        if (off + static_cast<size_t>(p.size) > flat.size())
            throw CompatibilityError("buffer blob shorter than network layout");
        std::memcpy(p.value, flat.data() + off, static_cast<size_t>(p.size) * sizeof(float));
        off += static_cast<size_t>(p.size);
    }
    if (off != flat.size()) throw CompatibilityError("buffer blob longer than network layout");
}

void Sequential::clip_params(float bound) {
    for (auto& p : params())
        for (int64_t i = 0; i < p.size; ++i)
            p.value[i] = std::min(bound, std::max(-bound, p.value[i]));
}

// -------------------------------------------------------------- optimizers

void Adam::step(std::vector<ParamView> params) {
    int64_t total = 0;
    for (auto& p : params) total += p.size;
    if (m_.empty()) {
        m_.assign(static_cast<size_t>(total), 0.0f);
        v_.assign(static_cast<size_t>(total), 0.0f);
    }
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    size_t off = 0;
    for (auto& p : params) {
        for (int64_t i = 0; i < p.size; ++i, ++off) {
            const double g = p.grad[i];
            const double m = beta1_ * m_[off] + (1.0 - beta1_) * g;
            const double v = beta2_ * v_[off] + (1.0 - beta2_) * g * g;
            m_[off] = static_cast<float>(m);
            v_[off] = static_cast<float>(v);
            p.value[i] -= static_cast<float>(lr_ * (m / bc1) / (std::sqrt(v / bc2) + eps_));
        }
    }
}

std::vector<float> Adam::state() const {
    std::vector<float> s;
    s.push_back(static_cast<float>(t_));
    s.insert(s.end(), m_.begin(), m_.end());
    s.insert(s.end(), v_.begin(), v_.end());
    return s;
}

void Adam::set_state(const std::vector<float>& s) {
    if (s.empty() || (s.size() - 1) % 2 != 0) throw CompatibilityError("adam state malformed");
    t_ = static_cast<int64_t>(s[0]);
    const size_t n = (s.size() - 1) / 2;
    m_.assign(s.begin() + 1, s.begin() + 1 + static_cast<std::ptrdiff_t>(n));
    v_.assign(s.begin() + 1 + static_cast<std::ptrdiff_t>(n), s.end());
}

void RmsProp::step(std::vector<ParamView> params) {
    int64_t total = 0;
    for (auto& p : params) total += p.size;
    if (sq_.empty()) sq_.assign(static_cast<size_t>(total), 0.0f);
    size_t off = 0;
    for (auto& p : params) {
        for (int64_t i = 0; i < p.size; ++i, ++off) {
            const double g = p.grad[i];
            const double s = rho_ * sq_[off] + (1.0 - rho_) * g * g;
            sq_[off] = static_cast<float>(s);
            p.value[i] -= static_cast<float>(lr_ * g / (std::sqrt(s) + eps_));
        }
    }
}

std::vector<float> RmsProp::state() const { return sq_; }

void RmsProp::set_state(const std::vector<float>& s) { sq_ = s; }

}  // namespace nn
}  // namespace fairprior
