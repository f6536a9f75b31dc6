#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "rlalign/errors.hpp"

namespace rlalign::nn {

// Dense row-major tensor. Activations use NHWC order.
template <class T>
struct Tensor {
    std::vector<int> shape;
    std::vector<T> data;

    Tensor() = default;
    explicit Tensor(std::vector<int> dims, T fill = T{}) : shape(std::move(dims))
    {
        data.assign(element_count(shape), fill);
    }

    static std::size_t element_count(const std::vector<int>& dims)
    {
        std::size_t n = 1;
        for (int d : dims) {
            if (d < 0) throw DimensionError("negative tensor dimension");
            n *= static_cast<std::size_t>(d);
        }
        return n;
    }

    int dim(std::size_t i) const { return shape.at(i); }
    std::size_t size() const noexcept { return data.size(); }
    T* ptr() noexcept { return data.data(); }
    const T* ptr() const noexcept { return data.data(); }

    friend bool operator==(const Tensor&, const Tensor&) = default;
};

enum class Mode { Train, Eval };

enum class HeadKind {
    Plain,        // FC -> actions
    Dueling,      // V and A branches, broadcast sum, then FC -> actions
    DuelingMean,  // V + A - mean(A)
};

const char* to_string(HeadKind head) noexcept;

struct ConvSpec {
    int filters = 32;
    int kernel = 5;
    int stride = 2;
    bool batch_norm = false;

    friend bool operator==(const ConvSpec&, const ConvSpec&) = default;
};

// Architecture descriptor. The default is the registration Q-network:
// 84x84x4 input, valid convolutions 32-32-64-64 with kernels 5-5-4-3 and
// stride 2 (84 -> 40 -> 18 -> 8 -> 3), BN+ReLU after all but the first,
// 2x2 max pooling (3 -> 1), FC 512 with ReLU, dueling head over 6 actions.
struct NetSpec {
    int input_h = 84;
    int input_w = 84;
    int input_c = 4;
    std::vector<ConvSpec> convs = {{32, 5, 2, false}, {32, 5, 2, true}, {64, 4, 2, true}, {64, 3, 2, true}};
    bool max_pool = true;
    int fc_units = 512;
    bool fc_relu = true;
    HeadKind head = HeadKind::Dueling;
    int actions = 6;
    float bn_momentum = 0.99f;
    float bn_eps = 1e-5f;

    static NetSpec registration(HeadKind head = HeadKind::Dueling);
    // One hidden ReLU layer over a flat input.
    static NetSpec mlp(int inputs, int hidden, int actions);

    // Throws ConfigError when the layer chain does not fit together.
    void validate() const;
    // Spatial extent after each convolution.
    std::vector<int> conv_output_sizes_h() const;
    std::vector<int> conv_output_sizes_w() const;
    int flattened_features() const;
    // Trainable scalar count (weights, biases, BN scale/shift).
    std::size_t trainable_parameter_count() const;

    friend bool operator==(const NetSpec&, const NetSpec&) = default;
};

struct AdamConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

// In-place Adam update with bias correction at step t >= 1.
template <class T>
void adam_update(std::span<T> params, std::span<const T> grads, std::span<T> m, std::span<T> v,
                 std::uint64_t t, double lr, const AdamConfig& cfg);

// One named tensor of the network. Running BN statistics are stored as
// non-trainable parameters and carry no gradient or Adam moments.
template <class T>
struct Param {
    std::string name;
    std::vector<int> shape;
    bool trainable = true;
    std::vector<T> value;
    std::vector<T> grad;
    std::vector<T> adam_m;
    std::vector<T> adam_v;

    friend bool operator==(const Param&, const Param&) = default;
};

template <class T>
class Workspace;

// Q-network with explicit backpropagation. A value type: copying yields an
// independent network (used for the target network).
template <class T>
class QNetwork {
public:
    QNetwork();
    QNetwork(const NetSpec& spec, std::uint64_t init_seed);
    ~QNetwork();
    QNetwork(const QNetwork&);
    QNetwork& operator=(const QNetwork&);
    QNetwork(QNetwork&&) noexcept;
    QNetwork& operator=(QNetwork&&) noexcept;

    const NetSpec& spec() const noexcept { return spec_; }

    // Input [b, h, w, c] -> Q-values [b, actions]. Train mode uses batch
    // statistics and updates BN running statistics.
    Tensor<T> forward(const Tensor<T>& input, Mode mode);

    // Eval-mode forward with private scratch; safe to call concurrently on
    // an unchanging network.
    Tensor<T> infer(const Tensor<T>& input) const;

    // Train-mode forward then backward of
    //   loss = mean_b sum_a mask[b,a] * (target[b] - Q[b,a])^2.
    // Gradients are overwritten. Returns the loss.
    T backward(const Tensor<T>& input, const Tensor<T>& action_mask, std::span<const T> targets);
    // Same with one taken action per row.
    T backward(const Tensor<T>& input, std::span<const int> actions, std::span<const T> targets);

    // Adam over every trainable parameter; BN running stats untouched.
    void adam_step(double lr, const AdamConfig& cfg = {});
    std::uint64_t adam_steps() const noexcept { return adam_t_; }
    void set_adam_steps(std::uint64_t t) noexcept { adam_t_ = t; }

    // Copies weights and running statistics, leaves Adam state alone.
    void copy_parameters_from(const QNetwork& other);

    std::vector<Param<T>>& params() noexcept { return params_; }
    const std::vector<Param<T>>& params() const noexcept { return params_; }
    Param<T>& param(const std::string& name);
    const Param<T>& param(const std::string& name) const;

    std::size_t trainable_parameter_count() const;

    // Same architecture and values in another precision.
    template <class U>
    QNetwork<U> cast() const;

    friend bool operator==(const QNetwork& a, const QNetwork& b)
    {
        return a.spec_ == b.spec_ && a.params_ == b.params_ && a.adam_t_ == b.adam_t_;
    }

private:
    template <class U>
    friend class QNetwork;

    struct ConvIndex {
        std::size_t weight, bias;
        std::size_t gamma = 0, beta = 0, running_mean = 0, running_var = 0;
    };
    struct HeadIndex {
        std::size_t fc_w, fc_b;
        std::size_t q_w = 0, q_b = 0;            // plain and dueling output layer
        std::size_t value_w = 0, value_b = 0;    // dueling
        std::size_t adv_w = 0, adv_b = 0;        // dueling
    };

    void build_layout();
    std::size_t add_param(std::string name, std::vector<int> shape, bool trainable);
    // Running BN statistics are written through `stats` when non-null.
    Tensor<T> run_forward(const Tensor<T>& input, Mode mode, Workspace<T>& ws,
                          std::vector<Param<T>>* stats) const;
    void run_backward(Workspace<T>& ws, const Tensor<T>& grad_q);

    NetSpec spec_;
    std::vector<Param<T>> params_;
    std::vector<ConvIndex> conv_idx_;
    HeadIndex head_idx_{};
    std::uint64_t adam_t_ = 0;
    std::unique_ptr<Workspace<T>> ws_;
};

extern template class QNetwork<float>;
extern template class QNetwork<double>;

template <class T>
template <class U>
QNetwork<U> QNetwork<T>::cast() const
{
    QNetwork<U> out(spec_, 0);
    out.adam_t_ = adam_t_;
    for (std::size_t i = 0; i < params_.size(); ++i) {
        const auto& src = params_[i];
        auto& dst = out.params_[i];
        auto conv = [](const std::vector<T>& s, std::vector<U>& d) {
            d.resize(s.size());
            for (std::size_t k = 0; k < s.size(); ++k) d[k] = static_cast<U>(s[k]);
        };
        conv(src.value, dst.value);
        conv(src.grad, dst.grad);
        conv(src.adam_m, dst.adam_m);
        conv(src.adam_v, dst.adam_v);
    }
    return out;
}

// Packs a batch of [h, w, c] samples into one [b, h, w, c] tensor.
template <class T>
Tensor<T> stack_batch(std::span<const Tensor<T>> samples);

} // namespace rlalign::nn
