#include "greenmg/nn.hpp"

#include <cmath>
#include <cstring>

#include <Eigen/Dense>

#include "greenmg/errors.hpp"
#include "greenmg/io.hpp"
#include "rng.hpp"

namespace greenmg {

RationalCoeffs rational_relu_init() {
    return RationalCoeffs{{0.0218, 0.5, 1.5957, 1.1915}, {1.0, 0.0, 2.3830}};
}

namespace {

constexpr double kDenFloor = 1e-12;

inline double sign_of(double q) { return q > 0.0 ? 1.0 : (q < 0.0 ? -1.0 : 0.0); }

}  // namespace

double rational_eval(const RationalCoeffs& c, double x) {
    const double p = ((c.num[3] * x + c.num[2]) * x + c.num[1]) * x + c.num[0];
    const double q = (c.den[2] * x + c.den[1]) * x + c.den[0];
    return p / (std::abs(q) + kDenFloor);
}

double rational_deriv(const RationalCoeffs& c, double x) {
    const double p = ((c.num[3] * x + c.num[2]) * x + c.num[1]) * x + c.num[0];
    const double pp = (3.0 * c.num[3] * x + 2.0 * c.num[2]) * x + c.num[1];
    const double q = (c.den[2] * x + c.den[1]) * x + c.den[0];
    const double qp = 2.0 * c.den[2] * x + c.den[1];
    const double den = std::abs(q) + kDenFloor;
    return pp / den - p * sign_of(q) * qp / (den * den);
}

void rational_coeff_grad(const RationalCoeffs& c, double x, double g, double* dnum, double* dden) {
    const double p = ((c.num[3] * x + c.num[2]) * x + c.num[1]) * x + c.num[0];
    const double q = (c.den[2] * x + c.den[1]) * x + c.den[0];
    const double den = std::abs(q) + kDenFloor;
    const double inv = 1.0 / den;
    const double s = sign_of(q);
    const double dq_scale = -g * p * s * inv * inv;
    double xp = 1.0;
    for (int i = 0; i < 4; ++i) {
        dnum[i] += g * xp * inv;
        if (i < 3) dden[i] += dq_scale * xp;
        xp *= x;
    }
}

MlpParams::MlpParams(int in_width, int out_width, uint64_t seed)
    : in_(in_width), out_(out_width), seed_(seed) {
    if (in_width <= 0 || out_width <= 0) {
        throw InvalidCount("network widths must be positive");
    }
    flat_.assign(static_cast<std::size_t>(activation_offset(kHiddenLayers - 1) + 7), 0.0);

    rng::Rng gen(seed);
    for (int l = 0; l <= kHiddenLayers; ++l) {
        const int rows = layer_rows(l);
        const int cols = layer_cols(l);
        const double bound = std::sqrt(6.0 / (rows + cols));
        double* w = flat_.data() + weight_offset(l);
        for (long i = 0; i < static_cast<long>(rows) * cols; ++i) {
            w[i] = gen.uniform(-bound, bound);
        }
        // biases stay zero
    }
    const RationalCoeffs init = rational_relu_init();
    for (int l = 0; l < kHiddenLayers; ++l) {
        double* a = flat_.data() + activation_offset(l);
        for (int i = 0; i < 4; ++i) a[i] = init.num[i];
        for (int i = 0; i < 3; ++i) a[4 + i] = init.den[i];
    }
}

long MlpParams::weight_offset(int l) const {
    long off = 0;
    for (int j = 0; j < l; ++j) {
        off += static_cast<long>(layer_rows(j)) * layer_cols(j) + layer_rows(j);
    }
    return off;
}

long MlpParams::bias_offset(int l) const {
    return weight_offset(l) + static_cast<long>(layer_rows(l)) * layer_cols(l);
}

long MlpParams::activation_offset(int l) const {
    return bias_offset(kHiddenLayers) + layer_rows(kHiddenLayers) + 7L * l;
}

RationalCoeffs MlpParams::activation(int l) const {
    const double* a = flat_.data() + activation_offset(l);
    RationalCoeffs c;
    for (int i = 0; i < 4; ++i) c.num[i] = a[i];
    for (int i = 0; i < 3; ++i) c.den[i] = a[4 + i];
    return c;
}

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Eigen::Map;
using Eigen::MatrixXd;
using Eigen::VectorXd;

Map<const RowMat> weight_view(const MlpParams& p, int l) {
    return {p.flat().data() + p.weight_offset(l), p.layer_rows(l), p.layer_cols(l)};
}

Map<const VectorXd> bias_view(const MlpParams& p, int l) {
    return {p.flat().data() + p.bias_offset(l), p.layer_rows(l)};
}

void apply_rational_inplace(const RationalCoeffs& c, double* z, long count) {
    for (long i = 0; i < count; ++i) z[i] = rational_eval(c, z[i]);
}

/// Shared forward walk. When `cache` is set, pre- and post-activation
/// matrices are kept for the backward pass; otherwise two ping-pong buffers
/// bound the working memory regardless of batch size.
void forward_impl(const MlpParams& p, const double* inputs, int count, MlpCache* cache,
                  std::vector<double>& outputs) {
    const long b = count;

    if (cache != nullptr) {
        cache->count = count;
        cache->inputs.assign(inputs, inputs + static_cast<std::size_t>(p.in_width()) * b);
    }

    std::vector<double> cur(inputs, inputs + static_cast<std::size_t>(p.in_width()) * b);
    std::vector<double> next;

    for (int l = 0; l < kHiddenLayers; ++l) {
        next.assign(static_cast<std::size_t>(kHiddenWidth) * b, 0.0);
        Map<const MatrixXd> a(cur.data(), p.layer_cols(l), b);
        Map<MatrixXd> z(next.data(), kHiddenWidth, b);
        z.noalias() = weight_view(p, l) * a;
        z.colwise() += bias_view(p, l);
        if (cache != nullptr) cache->pre[l] = next;
        apply_rational_inplace(p.activation(l), next.data(), static_cast<long>(next.size()));
        if (cache != nullptr) cache->post[l] = next;
        cur.swap(next);
    }

    outputs.assign(static_cast<std::size_t>(p.out_width()) * b, 0.0);
    Map<const MatrixXd> a(cur.data(), kHiddenWidth, b);
    Map<MatrixXd> y(outputs.data(), p.out_width(), b);
    y.noalias() = weight_view(p, kHiddenLayers) * a;
    y.colwise() += bias_view(p, kHiddenLayers);
    if (cache != nullptr) cache->outputs = outputs;
}

void check_input_shape(const MlpParams& p, std::size_t n, int count) {
    if (count < 0 || n != static_cast<std::size_t>(p.in_width()) * count) {
        throw ShapeMismatch("input buffer does not hold count points of in_width values");
    }
}

}  // namespace

std::vector<double> mlp_forward(const MlpParams& p, const std::vector<double>& inputs, int count) {
    check_input_shape(p, inputs.size(), count);
    std::vector<double> out;
    forward_impl(p, inputs.data(), count, nullptr, out);
    return out;
}

void mlp_forward_cached(const MlpParams& p, const std::vector<double>& inputs, int count,
                        MlpCache& cache) {
    check_input_shape(p, inputs.size(), count);
    std::vector<double> out;
    forward_impl(p, inputs.data(), count, &cache, out);
}

std::vector<double> mlp_backward_cached(const MlpParams& p, const MlpCache& cache,
                                        const std::vector<double>& cotangents) {
    const long b = cache.count;
    if (cotangents.size() != static_cast<std::size_t>(p.out_width()) * b) {
        throw ShapeMismatch("cotangent buffer does not hold count points of out_width values");
    }

    std::vector<double> grad(static_cast<std::size_t>(p.size()), 0.0);

    // Output layer: dW = dY A^T, db = row sums, then pull back through W.
    Map<const MatrixXd> dy(cotangents.data(), p.out_width(), b);
    Map<const MatrixXd> a_last(cache.post[kHiddenLayers - 1].data(), kHiddenWidth, b);
    {
        Map<RowMat> gw(grad.data() + p.weight_offset(kHiddenLayers), p.out_width(), kHiddenWidth);
        gw.noalias() = dy * a_last.transpose();
        Map<VectorXd> gb(grad.data() + p.bias_offset(kHiddenLayers), p.out_width());
        gb = dy.rowwise().sum();
    }

    MatrixXd da = weight_view(p, kHiddenLayers).transpose() * dy;

    for (int l = kHiddenLayers - 1; l >= 0; --l) {
        const RationalCoeffs c = p.activation(l);
        const double* z = cache.pre[l].data();
        double* act_grad = grad.data() + p.activation_offset(l);

        MatrixXd dz(kHiddenWidth, b);
        double* dzp = dz.data();
        const double* dap = da.data();
        const long entries = static_cast<long>(kHiddenWidth) * b;
        double dnum[4] = {0, 0, 0, 0};
        double dden[3] = {0, 0, 0};
        for (long i = 0; i < entries; ++i) {
            const double x = z[i];
            const double g = dap[i];
            const double pnum = ((c.num[3] * x + c.num[2]) * x + c.num[1]) * x + c.num[0];
            const double pder = (3.0 * c.num[3] * x + 2.0 * c.num[2]) * x + c.num[1];
            const double q = (c.den[2] * x + c.den[1]) * x + c.den[0];
            const double qder = 2.0 * c.den[2] * x + c.den[1];
            const double den = std::abs(q) + kDenFloor;
            const double inv = 1.0 / den;
            const double s = sign_of(q);
            dzp[i] = g * (pder * inv - pnum * s * qder * inv * inv);
            const double dq_scale = -g * pnum * s * inv * inv;
            const double gi = g * inv;
            double xp = 1.0;
            dnum[0] += gi;
            dden[0] += dq_scale;
            xp = x;
            dnum[1] += gi * xp;
            dden[1] += dq_scale * xp;
            xp *= x;
            dnum[2] += gi * xp;
            dden[2] += dq_scale * xp;
            xp *= x;
            dnum[3] += gi * xp;
        }
        for (int i = 0; i < 4; ++i) act_grad[i] += dnum[i];
        for (int i = 0; i < 3; ++i) act_grad[4 + i] += dden[i];

        Map<const MatrixXd> prev(l == 0 ? cache.inputs.data() : cache.post[l - 1].data(),
                                 p.layer_cols(l), b);
        Map<RowMat> gw(grad.data() + p.weight_offset(l), kHiddenWidth, p.layer_cols(l));
        gw.noalias() = dz * prev.transpose();
        Map<VectorXd> gb(grad.data() + p.bias_offset(l), kHiddenWidth);
        gb = dz.rowwise().sum();

        if (l > 0) da.noalias() = weight_view(p, l).transpose() * dz;
    }

    return grad;
}

std::vector<double> mlp_backward(const MlpParams& p, const std::vector<double>& inputs, int count,
                                 const std::vector<double>& cotangents) {
    check_input_shape(p, inputs.size(), count);
    MlpCache cache;
    std::vector<double> out;
    forward_impl(p, inputs.data(), count, &cache, out);
    return mlp_backward_cached(p, cache, cotangents);
}

Subdomain classify_point(const double* x, const double* y, int d) {
    double s = 0.0;
    bool equal = true;
    for (int a = 0; a < d; ++a) {
        s += x[a] - y[a];
        equal = equal && x[a] == y[a];
    }
    if (s < 0.0) return Subdomain::D1;
    if (s > 0.0) return Subdomain::D2;
    return equal ? Subdomain::D3 : Subdomain::D4;
}

Subdomain classify_index(const int32_t* i, const int32_t* j, int d) {
    int64_t s = 0;
    bool equal = true;
    for (int a = 0; a < d; ++a) {
        s += static_cast<int64_t>(i[a]) - j[a];
        equal = equal && i[a] == j[a];
    }
    if (s < 0) return Subdomain::D1;
    if (s > 0) return Subdomain::D2;
    return equal ? Subdomain::D3 : Subdomain::D4;
}

std::array<double, 2> assemble_weights(Subdomain s) {
    switch (s) {
        case Subdomain::D1:
            return {1.0, 0.0};
        case Subdomain::D2:
        case Subdomain::D3:
            return {0.0, 1.0};
        case Subdomain::D4:
        default:
            return {0.5, 0.5};
    }
}

double assemble_piecewise(double g1, double g2, Subdomain s) {
    const auto w = assemble_weights(s);
    return w[0] * g1 + w[1] * g2;
}

void adam_step(std::vector<double>& params, const std::vector<double>& grad, AdamState& state,
               double lr, double beta1, double beta2, double eps) {
    const std::size_t n = params.size();
    if (grad.size() != n) throw ShapeMismatch("gradient size differs from parameter size");
    if (state.m.size() != n) {
        if (state.t != 0) throw ShapeMismatch("optimizer state size differs from parameter size");
        state.m.assign(n, 0.0);
        state.v.assign(n, 0.0);
    }
    ++state.t;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(state.t));
    for (std::size_t i = 0; i < n; ++i) {
        state.m[i] = beta1 * state.m[i] + (1.0 - beta1) * grad[i];
        state.v[i] = beta2 * state.v[i] + (1.0 - beta2) * grad[i] * grad[i];
        const double mhat = state.m[i] / bc1;
        const double vhat = state.v[i] / bc2;
        params[i] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
}

void save_checkpoint(const std::string& path, const MlpParams& p) {
    nlohmann::json header;
    header["format"] = "greenmg-checkpoint";
    header["version"] = 1;
    header["in_width"] = p.in_width();
    header["out_width"] = p.out_width();
    header["hidden_width"] = kHiddenWidth;
    header["hidden_layers"] = kHiddenLayers;
    header["activation"] = "rational-3-2";
    header["seed"] = p.seed();
    write_blob_atomic(path, header, p.flat().data(), p.flat().size());
}

MlpParams load_checkpoint(const std::string& path) {
    const Blob blob = read_blob(path);
    const auto& h = blob.header;
    if (!h.contains("format") || h["format"] != "greenmg-checkpoint") {
        throw IoFailure("not a checkpoint file: " + path);
    }
    if (!h.contains("in_width") || !h.contains("out_width")) {
        throw ArchitectureMismatch("checkpoint header lacks layer widths");
    }
    if (h.value("hidden_width", -1) != kHiddenWidth ||
        h.value("hidden_layers", -1) != kHiddenLayers ||
        h.value("activation", std::string()) != "rational-3-2") {
        throw ArchitectureMismatch("checkpoint architecture differs from this build");
    }
    MlpParams p(h["in_width"].get<int>(), h["out_width"].get<int>(),
                h.value("seed", static_cast<uint64_t>(0)));
    if (blob.payload.size() != p.flat().size()) {
        throw ArchitectureMismatch("checkpoint parameter count differs from architecture");
    }
    p.flat() = blob.payload;
    return p;
}

}  // namespace greenmg
