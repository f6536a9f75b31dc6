#include "rlalign/neural.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <random>

#include <Eigen/Core>

namespace rlalign::nn {

const char* to_string(HeadKind head) noexcept
{
    switch (head) {
    case HeadKind::Plain: return "plain";
    case HeadKind::Dueling: return "dueling";
    case HeadKind::DuelingMean: return "dueling_mean";
    }
    return "unknown";
}

// ---------------------------------------------------------------------------
// NetSpec

NetSpec NetSpec::registration(HeadKind head)
{
    NetSpec s;
    s.head = head;
    return s;
}

NetSpec NetSpec::mlp(int inputs, int hidden, int actions)
{
    NetSpec s;
    s.input_h = 1;
    s.input_w = 1;
    s.input_c = inputs;
    s.convs.clear();
    s.max_pool = false;
    s.fc_units = hidden;
    s.fc_relu = true;
    s.head = HeadKind::Plain;
    s.actions = actions;
    return s;
}

namespace {

std::vector<int> conv_chain(int extent, const std::vector<ConvSpec>& convs)
{
    std::vector<int> out;
    for (const auto& c : convs) {
        if (c.kernel < 1 || c.stride < 1 || c.filters < 1) throw ConfigError("conv layer needs positive filters/kernel/stride");
        if (extent < c.kernel) throw ConfigError("conv kernel larger than its input");
        extent = (extent - c.kernel) / c.stride + 1;
        out.push_back(extent);
    }
    return out;
}

} // namespace

std::vector<int> NetSpec::conv_output_sizes_h() const { return conv_chain(input_h, convs); }
std::vector<int> NetSpec::conv_output_sizes_w() const { return conv_chain(input_w, convs); }

int NetSpec::flattened_features() const
{
    if (convs.empty()) return input_h * input_w * input_c;
    int h = conv_output_sizes_h().back();
    int w = conv_output_sizes_w().back();
    if (max_pool) {
        h /= 2;
        w /= 2;
    }
    return h * w * convs.back().filters;
}

void NetSpec::validate() const
{
    if (input_h < 1 || input_w < 1 || input_c < 1) throw ConfigError("network input extents must be positive");
    if (fc_units < 1 || actions < 1) throw ConfigError("fc_units and actions must be positive");
    if (!(bn_momentum >= 0.0f && bn_momentum < 1.0f) || !(bn_eps > 0.0f)) {
        throw ConfigError("batch-norm momentum must be in [0,1) and eps positive");
    }
    if (!convs.empty()) {
        const auto hs = conv_output_sizes_h();
        const auto ws = conv_output_sizes_w();
        if (max_pool && (hs.back() < 2 || ws.back() < 2)) throw ConfigError("max pooling needs at least 2x2 input");
    } else if (max_pool) {
        throw ConfigError("max pooling requires convolutional layers");
    }
}

std::size_t NetSpec::trainable_parameter_count() const
{
    validate();
    std::size_t n = 0;
    int cin = input_c;
    for (const auto& c : convs) {
        n += static_cast<std::size_t>(c.kernel) * c.kernel * cin * c.filters + c.filters;
        if (c.batch_norm) n += 2 * static_cast<std::size_t>(c.filters);
        cin = c.filters;
    }
    const auto f = static_cast<std::size_t>(flattened_features());
    const auto u = static_cast<std::size_t>(fc_units);
    const auto a = static_cast<std::size_t>(actions);
    n += f * u + u;
    switch (head) {
    case HeadKind::Plain: n += u * a + a; break;
    case HeadKind::Dueling: n += (u + 1) + (u * a + a) + (a * a + a); break;
    case HeadKind::DuelingMean: n += (u + 1) + (u * a + a); break;
    }
    return n;
}

// ---------------------------------------------------------------------------
// Adam

template <class T>
void adam_update(std::span<T> params, std::span<const T> grads, std::span<T> m, std::span<T> v,
                 std::uint64_t t, double lr, const AdamConfig& cfg)
{
    if (t < 1) throw InputError("adam step index must be >= 1");
    if (grads.size() != params.size() || m.size() != params.size() || v.size() != params.size()) {
        throw DimensionError("adam: buffer sizes differ");
    }
    for (T g : grads) {
        if (!std::isfinite(static_cast<double>(g))) throw NumericError("adam: non-finite gradient");
    }
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
    const T b1 = static_cast<T>(cfg.beta1);
    const T b2 = static_cast<T>(cfg.beta2);
    for (std::size_t i = 0; i < params.size(); ++i) {
        const T g = grads[i];
        m[i] = b1 * m[i] + (T(1) - b1) * g;
        v[i] = b2 * v[i] + (T(1) - b2) * g * g;
        const double mhat = static_cast<double>(m[i]) / bc1;
        const double vhat = static_cast<double>(v[i]) / bc2;
        params[i] -= static_cast<T>(lr * mhat / (std::sqrt(vhat) + cfg.epsilon));
    }
}

template void adam_update<float>(std::span<float>, std::span<const float>, std::span<float>, std::span<float>,
                                 std::uint64_t, double, const AdamConfig&);
template void adam_update<double>(std::span<double>, std::span<const double>, std::span<double>,
                                  std::span<double>, std::uint64_t, double, const AdamConfig&);

// ---------------------------------------------------------------------------
// Dense kernels

namespace {

template <class T>
using MatR = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using MapR = Eigen::Map<MatR<T>>;
template <class T>
using CMapR = Eigen::Map<const MatR<T>>;

// C[m,n] = A[m,k] * B[k,n]
template <class T>
void gemm_nn(const T* a, const T* b, T* c, int m, int k, int n)
{
    MapR<T>(c, m, n).noalias() = CMapR<T>(a, m, k) * CMapR<T>(b, k, n);
}

// C[k,n] = A[m,k]^T * B[m,n]
template <class T>
void gemm_tn(const T* a, const T* b, T* c, int m, int k, int n)
{
    MapR<T>(c, k, n).noalias() = CMapR<T>(a, m, k).transpose() * CMapR<T>(b, m, n);
}

// C[k,n] += A[m,k]^T * B[m,n]
template <class T>
void gemm_tn_acc(const T* a, const T* b, T* c, int m, int k, int n)
{
    MapR<T>(c, k, n).noalias() += CMapR<T>(a, m, k).transpose() * CMapR<T>(b, m, n);
}

// C[m,k] = A[m,n] * B[k,n]^T
template <class T>
void gemm_nt(const T* a, const T* b, T* c, int m, int n, int k)
{
    MapR<T>(c, m, k).noalias() = CMapR<T>(a, m, n) * CMapR<T>(b, k, n).transpose();
}

template <class T>
void add_row_bias(T* x, const T* bias, int rows, int cols)
{
    for (int r = 0; r < rows; ++r) {
        T* row = x + static_cast<std::size_t>(r) * cols;
        for (int c = 0; c < cols; ++c) row[c] += bias[c];
    }
}

template <class T>
void column_sums(const T* x, T* out, int rows, int cols)
{
    std::vector<double> acc(static_cast<std::size_t>(cols), 0.0);
    for (int r = 0; r < rows; ++r) {
        const T* row = x + static_cast<std::size_t>(r) * cols;
        for (int c = 0; c < cols; ++c) acc[static_cast<std::size_t>(c)] += row[c];
    }
    for (int c = 0; c < cols; ++c) out[c] = static_cast<T>(acc[static_cast<std::size_t>(c)]);
}

template <class T>
void check_finite(const std::vector<T>& v, int layer, const char* what)
{
    for (T x : v) {
        if (!std::isfinite(static_cast<double>(x))) {
            throw NumericError(std::string("non-finite ") + what + " at layer " + std::to_string(layer));
        }
    }
}

struct ConvGeom {
    int n, h, w, c;      // input
    int oh, ow, oc;      // output
    int k, stride;
    int rows() const { return n * oh * ow; }
    int cols() const { return k * k * c; }
    std::size_t in_size() const { return static_cast<std::size_t>(h) * w * c; }
    std::size_t out_size() const { return static_cast<std::size_t>(oh) * ow * oc; }
    // Samples per im2col chunk so the column buffer stays near 512 KiB.
    int chunk(std::size_t elem) const
    {
        const std::size_t per = static_cast<std::size_t>(oh) * ow * cols() * elem;
        return static_cast<int>(std::clamp<std::size_t>((512u * 1024u) / std::max<std::size_t>(per, 1), 1, n));
    }
    ConvGeom slice(int samples) const
    {
        ConvGeom g = *this;
        g.n = samples;
        return g;
    }
};

template <class T>
void im2col(const T* x, T* cols, const ConvGeom& g)
{
    const int kc = g.k * g.c;
    const int K = g.cols();
    for (int ni = 0; ni < g.n; ++ni) {
        for (int oy = 0; oy < g.oh; ++oy) {
            for (int ox = 0; ox < g.ow; ++ox) {
                T* dst = cols + (static_cast<std::size_t>((ni * g.oh + oy) * g.ow + ox)) * K;
                for (int ky = 0; ky < g.k; ++ky) {
                    const T* src = x + (static_cast<std::size_t>((ni * g.h + oy * g.stride + ky) * g.w + ox * g.stride)) * g.c;
                    std::memcpy(dst + ky * kc, src, sizeof(T) * static_cast<std::size_t>(kc));
                }
            }
        }
    }
}

template <class T>
void col2im(const T* cols, T* dx, const ConvGeom& g)
{
    std::fill(dx, dx + static_cast<std::size_t>(g.n) * g.h * g.w * g.c, T(0));
    const int kc = g.k * g.c;
    const int K = g.cols();
    for (int ni = 0; ni < g.n; ++ni) {
        for (int oy = 0; oy < g.oh; ++oy) {
            for (int ox = 0; ox < g.ow; ++ox) {
                const T* src = cols + (static_cast<std::size_t>((ni * g.oh + oy) * g.ow + ox)) * K;
                for (int ky = 0; ky < g.k; ++ky) {
                    T* dst = dx + (static_cast<std::size_t>((ni * g.h + oy * g.stride + ky) * g.w + ox * g.stride)) * g.c;
                    const T* s = src + ky * kc;
                    for (int i = 0; i < kc; ++i) dst[i] += s[i];
                }
            }
        }
    }
}

} // namespace

// ---------------------------------------------------------------------------
// Workspace

template <class T>
class Workspace {
public:
    struct Conv {
        ConvGeom geom{};
        const T* input = nullptr;  // layer input, alive until backward
        std::vector<T> xhat;      // normalized pre-affine values (BN layers)
        std::vector<T> inv_std;   // per channel
        std::vector<T> act;       // post-ReLU output
    };
    std::vector<Conv> conv;
    std::vector<T> cols;      // im2col scratch for one chunk
    std::vector<T> d_cols;
    int batch = 0;
    std::vector<T> pool_out;
    std::vector<std::size_t> pool_arg;
    std::vector<T> flat;     // FC input
    std::vector<T> hidden;   // FC output (post activation)
    std::vector<T> value;    // [n,1]
    std::vector<T> adv;      // [n,A]
    std::vector<T> sum;      // [n,A], dueling broadcast sum
    bool has_forward = false;
};

// ---------------------------------------------------------------------------
// QNetwork

template <class T>
QNetwork<T>::QNetwork(const NetSpec& spec, std::uint64_t init_seed)
    : spec_(spec), ws_(std::make_unique<Workspace<T>>())
{
    spec_.validate();
    build_layout();

    std::mt19937_64 rng(init_seed);
    auto he_uniform = [&](Param<T>& p, int fan_in) {
        const double limit = std::sqrt(6.0 / fan_in);
        std::uniform_real_distribution<double> u(-limit, limit);
        for (auto& v : p.value) v = static_cast<T>(u(rng));
    };
    int cin = spec_.input_c;
    for (std::size_t l = 0; l < spec_.convs.size(); ++l) {
        const auto& c = spec_.convs[l];
        he_uniform(params_[conv_idx_[l].weight], c.kernel * c.kernel * cin);
        if (c.batch_norm) {
            std::fill(params_[conv_idx_[l].gamma].value.begin(), params_[conv_idx_[l].gamma].value.end(), T(1));
            std::fill(params_[conv_idx_[l].running_var].value.begin(),
                      params_[conv_idx_[l].running_var].value.end(), T(1));
        }
        cin = c.filters;
    }
    he_uniform(params_[head_idx_.fc_w], spec_.flattened_features());
    switch (spec_.head) {
    case HeadKind::Plain: he_uniform(params_[head_idx_.q_w], spec_.fc_units); break;
    case HeadKind::Dueling:
        he_uniform(params_[head_idx_.value_w], spec_.fc_units);
        he_uniform(params_[head_idx_.adv_w], spec_.fc_units);
        he_uniform(params_[head_idx_.q_w], spec_.actions);
        break;
    case HeadKind::DuelingMean:
        he_uniform(params_[head_idx_.value_w], spec_.fc_units);
        he_uniform(params_[head_idx_.adv_w], spec_.fc_units);
        break;
    }
}

template <class T>
QNetwork<T>::~QNetwork() = default;

template <class T>
QNetwork<T>::QNetwork() = default;

template <class T>
QNetwork<T>::QNetwork(const QNetwork& o)
    : spec_(o.spec_), params_(o.params_), conv_idx_(o.conv_idx_), head_idx_(o.head_idx_), adam_t_(o.adam_t_),
      ws_(std::make_unique<Workspace<T>>())
{}

template <class T>
QNetwork<T>& QNetwork<T>::operator=(const QNetwork& o)
{
    if (this != &o) {
        spec_ = o.spec_;
        params_ = o.params_;
        conv_idx_ = o.conv_idx_;
        head_idx_ = o.head_idx_;
        adam_t_ = o.adam_t_;
        ws_ = std::make_unique<Workspace<T>>();
    }
    return *this;
}

template <class T>
QNetwork<T>::QNetwork(QNetwork&&) noexcept = default;
template <class T>
QNetwork<T>& QNetwork<T>::operator=(QNetwork&&) noexcept = default;

template <class T>
std::size_t QNetwork<T>::add_param(std::string name, std::vector<int> shape, bool trainable)
{
    Param<T> p;
    p.name = std::move(name);
    p.shape = std::move(shape);
    p.trainable = trainable;
    const std::size_t n = Tensor<T>::element_count(p.shape);
    p.value.assign(n, T(0));
    if (trainable) {
        p.grad.assign(n, T(0));
        p.adam_m.assign(n, T(0));
        p.adam_v.assign(n, T(0));
    }
    params_.push_back(std::move(p));
    return params_.size() - 1;
}

template <class T>
void QNetwork<T>::build_layout()
{
    params_.clear();
    conv_idx_.clear();
    int cin = spec_.input_c;
    for (std::size_t l = 0; l < spec_.convs.size(); ++l) {
        const auto& c = spec_.convs[l];
        const std::string base = "conv" + std::to_string(l + 1);
        ConvIndex idx{};
        idx.weight = add_param(base + ".weight", {c.kernel, c.kernel, cin, c.filters}, true);
        idx.bias = add_param(base + ".bias", {c.filters}, true);
        if (c.batch_norm) {
            idx.gamma = add_param(base + ".bn.gamma", {c.filters}, true);
            idx.beta = add_param(base + ".bn.beta", {c.filters}, true);
            idx.running_mean = add_param(base + ".bn.running_mean", {c.filters}, false);
            idx.running_var = add_param(base + ".bn.running_var", {c.filters}, false);
        }
        conv_idx_.push_back(idx);
        cin = c.filters;
    }
    const int f = spec_.flattened_features();
    const int u = spec_.fc_units;
    const int a = spec_.actions;
    head_idx_ = {};
    head_idx_.fc_w = add_param("fc.weight", {f, u}, true);
    head_idx_.fc_b = add_param("fc.bias", {u}, true);
    switch (spec_.head) {
    case HeadKind::Plain:
        head_idx_.q_w = add_param("q.weight", {u, a}, true);
        head_idx_.q_b = add_param("q.bias", {a}, true);
        break;
    case HeadKind::Dueling:
        head_idx_.value_w = add_param("value.weight", {u, 1}, true);
        head_idx_.value_b = add_param("value.bias", {1}, true);
        head_idx_.adv_w = add_param("advantage.weight", {u, a}, true);
        head_idx_.adv_b = add_param("advantage.bias", {a}, true);
        head_idx_.q_w = add_param("out.weight", {a, a}, true);
        head_idx_.q_b = add_param("out.bias", {a}, true);
        break;
    case HeadKind::DuelingMean:
        head_idx_.value_w = add_param("value.weight", {u, 1}, true);
        head_idx_.value_b = add_param("value.bias", {1}, true);
        head_idx_.adv_w = add_param("advantage.weight", {u, a}, true);
        head_idx_.adv_b = add_param("advantage.bias", {a}, true);
        break;
    }
}

template <class T>
Param<T>& QNetwork<T>::param(const std::string& name)
{
    for (auto& p : params_) {
        if (p.name == name) return p;
    }
    throw InputError("no parameter named " + name);
}

template <class T>
const Param<T>& QNetwork<T>::param(const std::string& name) const
{
    for (const auto& p : params_) {
        if (p.name == name) return p;
    }
    throw InputError("no parameter named " + name);
}

template <class T>
std::size_t QNetwork<T>::trainable_parameter_count() const
{
    std::size_t n = 0;
    for (const auto& p : params_) {
        if (p.trainable) n += p.value.size();
    }
    return n;
}

template <class T>
Tensor<T> QNetwork<T>::forward(const Tensor<T>& input, Mode mode)
{
    if (!ws_) ws_ = std::make_unique<Workspace<T>>();
    return run_forward(input, mode, *ws_, mode == Mode::Train ? &params_ : nullptr);
}

template <class T>
Tensor<T> QNetwork<T>::infer(const Tensor<T>& input) const
{
    Workspace<T> ws;
    return run_forward(input, Mode::Eval, ws, nullptr);
}

template <class T>
Tensor<T> QNetwork<T>::run_forward(const Tensor<T>& input, Mode mode, Workspace<T>& ws,
                                   std::vector<Param<T>>* stats) const
{
    if (params_.empty()) throw StateError("network has no parameters");
    if (input.shape.size() != 4 || input.shape[1] != spec_.input_h || input.shape[2] != spec_.input_w ||
        input.shape[3] != spec_.input_c || input.shape[0] < 1) {
        throw DimensionError("network input must be [b," + std::to_string(spec_.input_h) + "," +
                             std::to_string(spec_.input_w) + "," + std::to_string(spec_.input_c) + "]");
    }
    if (input.data.size() != Tensor<T>::element_count(input.shape)) {
        throw DimensionError("network input data does not match its shape");
    }
    const int n = input.shape[0];
    ws.batch = n;
    ws.has_forward = false;
    ws.conv.resize(spec_.convs.size());

    const T* x = input.ptr();
    int h = spec_.input_h, w = spec_.input_w, c = spec_.input_c;
    int layer = 0;
    for (std::size_t l = 0; l < spec_.convs.size(); ++l) {
        ++layer;
        const auto& cs = spec_.convs[l];
        auto& cache = ws.conv[l];
        ConvGeom& g = cache.geom;
        g = {n, h, w, c, (h - cs.kernel) / cs.stride + 1, (w - cs.kernel) / cs.stride + 1, cs.filters, cs.kernel,
             cs.stride};
        const int M = g.rows();
        const int K = g.cols();
        cache.input = x;
        cache.act.resize(static_cast<std::size_t>(M) * g.oc);
        const auto& W = params_[conv_idx_[l].weight].value;
        const auto& B = params_[conv_idx_[l].bias].value;
        const int step = g.chunk(sizeof(T));
        for (int s0 = 0; s0 < n; s0 += step) {
            const ConvGeom part = g.slice(std::min(step, n - s0));
            ws.cols.resize(static_cast<std::size_t>(part.rows()) * K);
            im2col(x + static_cast<std::size_t>(s0) * g.in_size(), ws.cols.data(), part);
            gemm_nn(ws.cols.data(), W.data(), cache.act.data() + static_cast<std::size_t>(s0) * g.out_size(),
                    part.rows(), K, g.oc);
        }
        add_row_bias(cache.act.data(), B.data(), M, g.oc);

        if (cs.batch_norm) {
            const auto& gamma = params_[conv_idx_[l].gamma].value;
            const auto& beta = params_[conv_idx_[l].beta].value;
            cache.xhat.resize(cache.act.size());
            cache.inv_std.resize(static_cast<std::size_t>(g.oc));
            std::vector<double> mean(static_cast<std::size_t>(g.oc), 0.0);
            std::vector<double> var(static_cast<std::size_t>(g.oc), 0.0);
            if (mode == Mode::Train) {
                for (int r = 0; r < M; ++r) {
                    const T* row = cache.act.data() + static_cast<std::size_t>(r) * g.oc;
                    for (int ch = 0; ch < g.oc; ++ch) mean[ch] += row[ch];
                }
                for (auto& m : mean) m /= M;
                for (int r = 0; r < M; ++r) {
                    const T* row = cache.act.data() + static_cast<std::size_t>(r) * g.oc;
                    for (int ch = 0; ch < g.oc; ++ch) {
                        const double d = row[ch] - mean[ch];
                        var[ch] += d * d;
                    }
                }
                for (auto& v : var) v /= M;
                if (stats) {
                    auto& rm = (*stats)[conv_idx_[l].running_mean].value;
                    auto& rv = (*stats)[conv_idx_[l].running_var].value;
                    const double mom = spec_.bn_momentum;
                    const double unbias = M > 1 ? static_cast<double>(M) / (M - 1) : 1.0;
                    for (int ch = 0; ch < g.oc; ++ch) {
                        rm[ch] = static_cast<T>(mom * rm[ch] + (1.0 - mom) * mean[ch]);
                        rv[ch] = static_cast<T>(mom * rv[ch] + (1.0 - mom) * var[ch] * unbias);
                    }
                }
            } else {
                const auto& rm = params_[conv_idx_[l].running_mean].value;
                const auto& rv = params_[conv_idx_[l].running_var].value;
                for (int ch = 0; ch < g.oc; ++ch) {
                    mean[ch] = rm[ch];
                    var[ch] = rv[ch];
                }
            }
            for (int ch = 0; ch < g.oc; ++ch) {
                cache.inv_std[ch] = static_cast<T>(1.0 / std::sqrt(var[ch] + spec_.bn_eps));
            }
            for (int r = 0; r < M; ++r) {
                T* row = cache.act.data() + static_cast<std::size_t>(r) * g.oc;
                T* xh = cache.xhat.data() + static_cast<std::size_t>(r) * g.oc;
                for (int ch = 0; ch < g.oc; ++ch) {
                    xh[ch] = static_cast<T>((row[ch] - mean[ch]) * cache.inv_std[ch]);
                    row[ch] = gamma[ch] * xh[ch] + beta[ch];
                }
            }
        }
        for (auto& v : cache.act) v = v > T(0) ? v : T(0);
        check_finite(cache.act, layer, "activation");
        x = cache.act.data();
        h = g.oh;
        w = g.ow;
        c = g.oc;
    }

    int features = h * w * c;
    if (spec_.max_pool) {
        ++layer;
        const int ph = h / 2, pw = w / 2;
        features = ph * pw * c;
        ws.pool_out.assign(static_cast<std::size_t>(n) * features, T(0));
        ws.pool_arg.assign(ws.pool_out.size(), 0);
        for (int ni = 0; ni < n; ++ni) {
            for (int py = 0; py < ph; ++py) {
                for (int px = 0; px < pw; ++px) {
                    for (int ch = 0; ch < c; ++ch) {
                        std::size_t best = 0;
                        T best_v = T(0);
                        bool first = true;
                        for (int dy = 0; dy < 2; ++dy) {
                            for (int dx = 0; dx < 2; ++dx) {
                                const std::size_t idx =
                                    (static_cast<std::size_t>((ni * h + 2 * py + dy) * w + 2 * px + dx)) * c + ch;
                                if (first || x[idx] > best_v) {
                                    best_v = x[idx];
                                    best = idx;
                                    first = false;
                                }
                            }
                        }
                        const std::size_t o = (static_cast<std::size_t>((ni * ph + py) * pw + px)) * c + ch;
                        ws.pool_out[o] = best_v;
                        ws.pool_arg[o] = best;
                    }
                }
            }
        }
        ws.flat = ws.pool_out;
    } else {
        ws.flat.assign(x, x + static_cast<std::size_t>(n) * features);
    }

    ++layer;
    const int U = spec_.fc_units;
    const int A = spec_.actions;
    ws.hidden.resize(static_cast<std::size_t>(n) * U);
    gemm_nn(ws.flat.data(), params_[head_idx_.fc_w].value.data(), ws.hidden.data(), n, features, U);
    add_row_bias(ws.hidden.data(), params_[head_idx_.fc_b].value.data(), n, U);
    if (spec_.fc_relu) {
        for (auto& v : ws.hidden) v = v > T(0) ? v : T(0);
    }
    check_finite(ws.hidden, layer, "activation");

    ++layer;
    Tensor<T> q({n, A});
    switch (spec_.head) {
    case HeadKind::Plain:
        gemm_nn(ws.hidden.data(), params_[head_idx_.q_w].value.data(), q.ptr(), n, U, A);
        add_row_bias(q.ptr(), params_[head_idx_.q_b].value.data(), n, A);
        break;
    case HeadKind::Dueling:
    case HeadKind::DuelingMean: {
        ws.value.resize(static_cast<std::size_t>(n));
        ws.adv.resize(static_cast<std::size_t>(n) * A);
        gemm_nn(ws.hidden.data(), params_[head_idx_.value_w].value.data(), ws.value.data(), n, U, 1);
        add_row_bias(ws.value.data(), params_[head_idx_.value_b].value.data(), n, 1);
        gemm_nn(ws.hidden.data(), params_[head_idx_.adv_w].value.data(), ws.adv.data(), n, U, A);
        add_row_bias(ws.adv.data(), params_[head_idx_.adv_b].value.data(), n, A);
        ws.sum.resize(ws.adv.size());
        for (int i = 0; i < n; ++i) {
            double mean_adv = 0.0;
            if (spec_.head == HeadKind::DuelingMean) {
                for (int a = 0; a < A; ++a) mean_adv += ws.adv[static_cast<std::size_t>(i) * A + a];
                mean_adv /= A;
            }
            for (int a = 0; a < A; ++a) {
                const std::size_t k = static_cast<std::size_t>(i) * A + a;
                ws.sum[k] = static_cast<T>(ws.value[i] + ws.adv[k] - mean_adv);
            }
        }
        if (spec_.head == HeadKind::Dueling) {
            gemm_nn(ws.sum.data(), params_[head_idx_.q_w].value.data(), q.ptr(), n, A, A);
            add_row_bias(q.ptr(), params_[head_idx_.q_b].value.data(), n, A);
        } else {
            q.data = ws.sum;
        }
        break;
    }
    }
    check_finite(q.data, layer, "Q-value");
    ws.has_forward = true;
    return q;
}

template <class T>
T QNetwork<T>::backward(const Tensor<T>& input, const Tensor<T>& action_mask, std::span<const T> targets)
{
    const int n = input.shape.empty() ? 0 : input.shape[0];
    if (action_mask.shape != std::vector<int>{n, spec_.actions}) throw DimensionError("action mask must be [b, actions]");
    if (static_cast<int>(targets.size()) != n) throw DimensionError("one target per batch row required");
    for (T t : targets) {
        if (!std::isfinite(static_cast<double>(t))) throw NumericError("non-finite TD target");
    }
    const Tensor<T> q = forward(input, Mode::Train);
    const int A = spec_.actions;
    Tensor<T> grad_q({n, A});
    double loss = 0.0;
    for (int i = 0; i < n; ++i) {
        for (int a = 0; a < A; ++a) {
            const std::size_t k = static_cast<std::size_t>(i) * A + a;
            const double m = action_mask.data[k];
            if (m == 0.0) continue;
            const double r = static_cast<double>(targets[i]) - q.data[k];
            loss += m * r * r;
            grad_q.data[k] = static_cast<T>(-2.0 * m * r / n);
        }
    }
    run_backward(*ws_, grad_q);
    return static_cast<T>(loss / n);
}

template <class T>
T QNetwork<T>::backward(const Tensor<T>& input, std::span<const int> actions, std::span<const T> targets)
{
    const int n = input.shape.empty() ? 0 : input.shape[0];
    if (static_cast<int>(actions.size()) != n) throw DimensionError("one action per batch row required");
    Tensor<T> mask({n, spec_.actions});
    for (int i = 0; i < n; ++i) {
        if (actions[i] < 0 || actions[i] >= spec_.actions) throw InputError("action index out of range");
        mask.data[static_cast<std::size_t>(i) * spec_.actions + actions[i]] = T(1);
    }
    return backward(input, mask, targets);
}

template <class T>
void QNetwork<T>::run_backward(Workspace<T>& ws, const Tensor<T>& grad_q)
{
    if (!ws.has_forward) throw StateError("backward requires a preceding train-mode forward");
    const int n = ws.batch;
    const int U = spec_.fc_units;
    const int A = spec_.actions;
    const int F = spec_.flattened_features();

    std::vector<T> d_hidden(static_cast<std::size_t>(n) * U, T(0));
    switch (spec_.head) {
    case HeadKind::Plain: {
        auto& qw = params_[head_idx_.q_w];
        gemm_tn(ws.hidden.data(), grad_q.ptr(), qw.grad.data(), n, U, A);
        column_sums(grad_q.ptr(), params_[head_idx_.q_b].grad.data(), n, A);
        gemm_nt(grad_q.ptr(), qw.value.data(), d_hidden.data(), n, A, U);
        break;
    }
    case HeadKind::Dueling:
    case HeadKind::DuelingMean: {
        std::vector<T> d_sum(static_cast<std::size_t>(n) * A);
        std::vector<T> d_value(static_cast<std::size_t>(n));
        std::vector<T> d_adv(static_cast<std::size_t>(n) * A);
        if (spec_.head == HeadKind::Dueling) {
            auto& ow = params_[head_idx_.q_w];
            gemm_tn(ws.sum.data(), grad_q.ptr(), ow.grad.data(), n, A, A);
            column_sums(grad_q.ptr(), params_[head_idx_.q_b].grad.data(), n, A);
            gemm_nt(grad_q.ptr(), ow.value.data(), d_sum.data(), n, A, A);
            for (int i = 0; i < n; ++i) {
                double s = 0.0;
                for (int a = 0; a < A; ++a) {
                    const std::size_t k = static_cast<std::size_t>(i) * A + a;
                    s += d_sum[k];
                    d_adv[k] = d_sum[k];
                }
                d_value[i] = static_cast<T>(s);
            }
        } else {
            for (int i = 0; i < n; ++i) {
                double s = 0.0;
                for (int a = 0; a < A; ++a) s += grad_q.data[static_cast<std::size_t>(i) * A + a];
                d_value[i] = static_cast<T>(s);
                for (int a = 0; a < A; ++a) {
                    const std::size_t k = static_cast<std::size_t>(i) * A + a;
                    d_adv[k] = static_cast<T>(grad_q.data[k] - s / A);
                }
            }
        }
        gemm_tn(ws.hidden.data(), d_value.data(), params_[head_idx_.value_w].grad.data(), n, U, 1);
        column_sums(d_value.data(), params_[head_idx_.value_b].grad.data(), n, 1);
        gemm_tn(ws.hidden.data(), d_adv.data(), params_[head_idx_.adv_w].grad.data(), n, U, A);
        column_sums(d_adv.data(), params_[head_idx_.adv_b].grad.data(), n, A);
        std::vector<T> tmp(static_cast<std::size_t>(n) * U);
        gemm_nt(d_value.data(), params_[head_idx_.value_w].value.data(), d_hidden.data(), n, 1, U);
        gemm_nt(d_adv.data(), params_[head_idx_.adv_w].value.data(), tmp.data(), n, A, U);
        for (std::size_t i = 0; i < d_hidden.size(); ++i) d_hidden[i] += tmp[i];
        break;
    }
    }

    if (spec_.fc_relu) {
        for (std::size_t i = 0; i < d_hidden.size(); ++i) {
            if (!(ws.hidden[i] > T(0))) d_hidden[i] = T(0);
        }
    }
    auto& fcw = params_[head_idx_.fc_w];
    gemm_tn(ws.flat.data(), d_hidden.data(), fcw.grad.data(), n, F, U);
    column_sums(d_hidden.data(), params_[head_idx_.fc_b].grad.data(), n, U);
    if (spec_.convs.empty()) return;

    std::vector<T> d_flat(static_cast<std::size_t>(n) * F);
    gemm_nt(d_hidden.data(), fcw.value.data(), d_flat.data(), n, U, F);

    auto& last = ws.conv.back();
    std::vector<T> d_act(last.act.size(), T(0));
    if (spec_.max_pool) {
        for (std::size_t o = 0; o < d_flat.size(); ++o) d_act[ws.pool_arg[o]] += d_flat[o];
    } else {
        d_act = d_flat;
    }

    for (std::size_t li = spec_.convs.size(); li-- > 0;) {
        const auto& cs = spec_.convs[li];
        auto& cache = ws.conv[li];
        const ConvGeom& g = cache.geom;
        const int M = g.rows();
        const int K = g.cols();
        const int C = g.oc;

        for (std::size_t i = 0; i < d_act.size(); ++i) {
            if (!(cache.act[i] > T(0))) d_act[i] = T(0);
        }
        if (cs.batch_norm) {
            const auto& gamma = params_[conv_idx_[li].gamma].value;
            auto& d_gamma = params_[conv_idx_[li].gamma].grad;
            auto& d_beta = params_[conv_idx_[li].beta].grad;
            std::vector<double> sum_dy(static_cast<std::size_t>(C), 0.0);
            std::vector<double> sum_dy_xhat(static_cast<std::size_t>(C), 0.0);
            for (int r = 0; r < M; ++r) {
                const T* dy = d_act.data() + static_cast<std::size_t>(r) * C;
                const T* xh = cache.xhat.data() + static_cast<std::size_t>(r) * C;
                for (int ch = 0; ch < C; ++ch) {
                    sum_dy[ch] += dy[ch];
                    sum_dy_xhat[ch] += static_cast<double>(dy[ch]) * xh[ch];
                }
            }
            for (int ch = 0; ch < C; ++ch) {
                d_gamma[ch] = static_cast<T>(sum_dy_xhat[ch]);
                d_beta[ch] = static_cast<T>(sum_dy[ch]);
            }
            // dz = gamma * inv_std / M * (M*dy - sum(dy) - xhat*sum(dy*xhat))
            for (int r = 0; r < M; ++r) {
                T* dy = d_act.data() + static_cast<std::size_t>(r) * C;
                const T* xh = cache.xhat.data() + static_cast<std::size_t>(r) * C;
                for (int ch = 0; ch < C; ++ch) {
                    const double scale = static_cast<double>(gamma[ch]) * cache.inv_std[ch] / M;
                    dy[ch] = static_cast<T>(scale * (M * static_cast<double>(dy[ch]) - sum_dy[ch] -
                                                     xh[ch] * sum_dy_xhat[ch]));
                }
            }
        }
        auto& W = params_[conv_idx_[li].weight];
        column_sums(d_act.data(), params_[conv_idx_[li].bias].grad.data(), M, C);
        std::fill(W.grad.begin(), W.grad.end(), T(0));
        std::vector<T> d_prev(li == 0 ? 0 : ws.conv[li - 1].act.size());
        const int step = g.chunk(sizeof(T));
        for (int s0 = 0; s0 < g.n; s0 += step) {
            const ConvGeom part = g.slice(std::min(step, g.n - s0));
            const T* dy = d_act.data() + static_cast<std::size_t>(s0) * g.out_size();
            ws.cols.resize(static_cast<std::size_t>(part.rows()) * K);
            im2col(cache.input + static_cast<std::size_t>(s0) * g.in_size(), ws.cols.data(), part);
            gemm_tn_acc(ws.cols.data(), dy, W.grad.data(), part.rows(), K, C);
            if (li == 0) continue;
            ws.d_cols.resize(ws.cols.size());
            gemm_nt(dy, W.value.data(), ws.d_cols.data(), part.rows(), C, K);
            col2im(ws.d_cols.data(), d_prev.data() + static_cast<std::size_t>(s0) * g.in_size(), part);
        }
        if (li == 0) break;
        d_act = std::move(d_prev);
    }
}

template <class T>
void QNetwork<T>::adam_step(double lr, const AdamConfig& cfg)
{
    for (const auto& p : params_) {
        if (!p.trainable) continue;
        for (T g : p.grad) {
            if (!std::isfinite(static_cast<double>(g))) throw NumericError("non-finite gradient in " + p.name);
        }
    }
    ++adam_t_;
    for (auto& p : params_) {
        if (!p.trainable) continue;
        adam_update<T>(p.value, p.grad, p.adam_m, p.adam_v, adam_t_, lr, cfg);
    }
}

template <class T>
void QNetwork<T>::copy_parameters_from(const QNetwork& other)
{
    if (!(spec_ == other.spec_)) throw ConfigError("cannot copy parameters between different architectures");
    for (std::size_t i = 0; i < params_.size(); ++i) params_[i].value = other.params_[i].value;
}

template <class T>
Tensor<T> stack_batch(std::span<const Tensor<T>> samples)
{
    if (samples.empty()) throw DimensionError("empty batch");
    const auto& shape = samples.front().shape;
    std::vector<int> dims{static_cast<int>(samples.size())};
    dims.insert(dims.end(), shape.begin(), shape.end());
    Tensor<T> out;
    out.shape = dims;
    out.data.reserve(Tensor<T>::element_count(dims));
    for (const auto& s : samples) {
        if (s.shape != shape) throw DimensionError("batch samples differ in shape");
        out.data.insert(out.data.end(), s.data.begin(), s.data.end());
    }
    return out;
}

template class QNetwork<float>;
template class QNetwork<double>;
template Tensor<float> stack_batch<float>(std::span<const Tensor<float>>);
template Tensor<double> stack_batch<double>(std::span<const Tensor<double>>);

} // namespace rlalign::nn
