#pragma once

#include <memory>
#include <string>
#include <vector>

#include "fairprior/rng.hpp"
#include "fairprior/tensor.hpp"

namespace fairprior {
namespace nn {

// Trainable parameter (or non-trainable buffer) owned by a layer.
struct ParamView {
    float* value = nullptr;
    float* grad = nullptr;  // null for buffers
    int64_t size = 0;
};

// Layer with explicit forward/backward. backward() consumes the gradient
// w.r.t. the layer output, accumulates parameter gradients, and returns the
// gradient w.r.t. the layer input. Layers cache whatever they need from the
// last forward call; one forward must precede each backward.
class Layer {
  public:
    virtual ~Layer() = default;
    virtual Tensor forward(const Tensor& x, bool train) = 0;
    virtual Tensor backward(const Tensor& grad_out) = 0;
    virtual std::vector<ParamView> params() { return {}; }
    virtual std::vector<ParamView> buffers() { return {}; }
    virtual std::string kind() const = 0;
};

// 2-D convolution, NCHW, square kernel. Weight layout [out_c, in_c*k*k].
class Conv2d : public Layer {
  public:
    Conv2d(int in_c, int out_c, int kernel, int stride, int pad, Rng& init_rng);

    Tensor forward(const Tensor& x, bool train) override;
    Tensor backward(const Tensor& grad_out) override;
    std::vector<ParamView> params() override;
    std::string kind() const override { return "conv2d"; }

    int in_channels() const { return in_c_; }
    int out_channels() const { return out_c_; }
    int kernel() const { return k_; }
    int stride() const { return stride_; }

  private:
    int in_c_, out_c_, k_, stride_, pad_;
    std::vector<float> w_, b_, gw_, gb_;
    Tensor x_cache_;
};

// Per-channel batch normalization over (N,H,W). Training mode uses batch
// statistics and updates running estimates; eval mode uses running stats.
class BatchNorm2d : public Layer {
  public:
    explicit BatchNorm2d(int channels, double momentum = 0.1, double eps = 1e-5);

    Tensor forward(const Tensor& x, bool train) override;
    Tensor backward(const Tensor& grad_out) override;
    std::vector<ParamView> params() override;
    std::vector<ParamView> buffers() override;
    std::string kind() const override { return "batchnorm2d"; }

  private:
    int c_;
    double momentum_, eps_;
    std::vector<float> gamma_, beta_, ggamma_, gbeta_;
    std::vector<float> running_mean_, running_var_;
    // caches from last training-mode forward
    std::vector<float> mean_, invstd_;
    Tensor xhat_cache_;
    bool last_train_ = false;
    Tensor x_eval_cache_;
};

// Fully connected layer, input [N, in], weight [out, in].
class Dense : public Layer {
  public:
    Dense(int in_dim, int out_dim, Rng& init_rng);

    Tensor forward(const Tensor& x, bool train) override;
    Tensor backward(const Tensor& grad_out) override;
    std::vector<ParamView> params() override;
    std::string kind() const override { return "dense"; }

    int in_dim() const { return in_; }
    int out_dim() const { return out_; }

  private:
    int in_, out_;
    std::vector<float> w_, b_, gw_, gb_;
    Tensor x_cache_;
};

class ReLU : public Layer {
  public:
    Tensor forward(const Tensor& x, bool train) override;
    Tensor backward(const Tensor& grad_out) override;
    std::string kind() const override { return "relu"; }

  private:
    Tensor x_cache_;
};

class LeakyReLU : public Layer {
  public:
    explicit LeakyReLU(float slope = 0.2f) : slope_(slope) {}
    Tensor forward(const Tensor& x, bool train) override;
    Tensor backward(const Tensor& grad_out) override;
    std::string kind() const override { return "leaky_relu"; }

  private:
    float slope_;
    Tensor x_cache_;
};

class Sigmoid : public Layer {
  public:
    Tensor forward(const Tensor& x, bool train) override;
    Tensor backward(const Tensor& grad_out) override;
    std::string kind() const override { return "sigmoid"; }

  private:
    Tensor y_cache_;
};

// Collapses all non-batch dimensions: [N, ...] -> [N, D].
class Flatten : public Layer {
  public:
    Tensor forward(const Tensor& x, bool train) override;
    Tensor backward(const Tensor& grad_out) override;
    std::string kind() const override { return "flatten"; }

  private:
    std::vector<int> in_shape_;
};

class Sequential {
  public:
    Sequential() = default;
    Sequential(Sequential&&) = default;
    Sequential& operator=(Sequential&&) = default;

    void add(std::unique_ptr<Layer> layer) { layers_.push_back(std::move(layer)); }

    Tensor forward(const Tensor& x, bool train);
    // Backward through the whole stack; returns gradient w.r.t. the input.
    Tensor backward(const Tensor& grad_out);

    std::vector<ParamView> params();
    std::vector<ParamView> buffers();
    int64_t param_count();
    void zero_grads();

    std::vector<float> flat_params();
    void set_flat_params(const std::vector<float>& flat);
    std::vector<float> flat_buffers();
    void set_flat_buffers(const std::vector<float>& flat);

    void clip_params(float bound);

    size_t layer_count() const { return layers_.size(); }
    Layer& layer(size_t i) { return *layers_[i]; }
    const Layer& layer(size_t i) const { return *layers_[i]; }

  private:
    std::vector<std::unique_ptr<Layer>> layers_;
};

// Optimizers minimize: they descend the accumulated gradients. Ascent steps
// are expressed by negating the gradient at the point it is injected.
class Optimizer {
  public:
    virtual ~Optimizer() = default;
    virtual void step(std::vector<ParamView> params) = 0;
    virtual std::vector<float> state() const = 0;
    virtual void set_state(const std::vector<float>& s) = 0;
    virtual std::string kind() const = 0;
};

class Adam : public Optimizer {
  public:
    explicit Adam(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
        : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

    void step(std::vector<ParamView> params) override;
    std::vector<float> state() const override;
    void set_state(const std::vector<float>& s) override;
    std::string kind() const override { return "adam"; }

  private:
    double lr_, beta1_, beta2_, eps_;
    int64_t t_ = 0;
    std::vector<float> m_, v_;
};

// Momentum-free adaptive step (RMSProp), the usual choice for clipped
// Wasserstein critics.
class RmsProp : public Optimizer {
  public:
    explicit RmsProp(double lr, double rho = 0.9, double eps = 1e-8)
        : lr_(lr), rho_(rho), eps_(eps) {}

    void step(std::vector<ParamView> params) override;
    std::vector<float> state() const override;
    void set_state(const std::vector<float>& s) override;
    std::string kind() const override { return "rmsprop"; }

  private:
    double lr_, rho_, eps_;
    std::vector<float> sq_;
};

}  // namespace nn
}  // namespace fairprior
