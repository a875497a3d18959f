#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace greenmg {

/// Trainable rational activation of degree (3, 2):
/// r(x) = P(x) / (|Q(x)| + 1e-12), coefficients stored lowest degree first.
/// Initialized to the best uniform approximation of ReLU on [-1, 1]
/// (sup error below 0.1).
struct RationalCoeffs {
    std::array<double, 4> num;
    std::array<double, 3> den;
};

RationalCoeffs rational_relu_init();

double rational_eval(const RationalCoeffs& c, double x);
/// Derivative with respect to the input.
double rational_deriv(const RationalCoeffs& c, double x);
/// Accumulate d(loss)/d(coeffs) for cotangent g at input x into dnum/dden.
void rational_coeff_grad(const RationalCoeffs& c, double x, double g, double* dnum, double* dden);

inline constexpr int kHiddenWidth = 50;
inline constexpr int kHiddenLayers = 4;

/// Fully connected network in_width -> 50 -> 50 -> 50 -> 50 -> out_width with
/// an independent trainable rational activation after each hidden layer and a
/// linear output layer. All parameters live in one flat vector:
/// [W0 b0 W1 b1 ... W4 b4, act0.num act0.den, ..., act3.num act3.den],
/// weights row-major (rows = outputs). Weights are Glorot-uniform from the
/// seed (drawn layer by layer, row-major), biases zero.
class MlpParams {
  public:
    MlpParams(int in_width, int out_width, uint64_t seed);

    int in_width() const { return in_; }
    int out_width() const { return out_; }
    uint64_t seed() const { return seed_; }

    std::vector<double>& flat() { return flat_; }
    const std::vector<double>& flat() const { return flat_; }

    int layer_rows(int l) const { return l == kHiddenLayers ? out_ : kHiddenWidth; }
    int layer_cols(int l) const { return l == 0 ? in_ : kHiddenWidth; }
    long weight_offset(int l) const;
    long bias_offset(int l) const;
    long activation_offset(int l) const;  // 7 doubles: num[4] den[3]
    long size() const { return static_cast<long>(flat_.size()); }

    RationalCoeffs activation(int l) const;

  private:
    int in_, out_;
    uint64_t seed_;
    std::vector<double> flat_;
};

/// Activations cached by a forward pass for reuse in the backward pass.
struct MlpCache {
    int count = 0;
    std::vector<double> inputs;                         // in_width x count, column-major
    std::array<std::vector<double>, kHiddenLayers> pre;    // 50 x count each
    std::array<std::vector<double>, kHiddenLayers> post;   // 50 x count each
    std::vector<double> outputs;                        // out_width x count
};

/// inputs: count points, each in_width doubles, consecutive per point.
/// Returns out_width doubles per point, consecutive per point.
std::vector<double> mlp_forward(const MlpParams& p, const std::vector<double>& inputs, int count);
void mlp_forward_cached(const MlpParams& p, const std::vector<double>& inputs, int count,
                        MlpCache& cache);

/// Gradient of sum_i <cotangents_i, output_i> with respect to every
/// parameter, same flat layout as MlpParams. cotangents: out_width per point.
std::vector<double> mlp_backward(const MlpParams& p, const std::vector<double>& inputs, int count,
                                 const std::vector<double>& cotangents);
std::vector<double> mlp_backward_cached(const MlpParams& p, const MlpCache& cache,
                                        const std::vector<double>& cotangents);

/// Sign regions of the kernel domain, split by s = sum_a (x_a - y_a):
/// D1: s < 0; D2: s > 0; D3: s = 0 and x = y; D4: s = 0 and x != y.
enum class Subdomain : uint8_t { D1 = 1, D2 = 2, D3 = 3, D4 = 4 };

Subdomain classify_point(const double* x, const double* y, int d);
/// Exact classification for grid nodes via integer index arithmetic.
Subdomain classify_index(const int32_t* i, const int32_t* j, int d);

/// Head mixing weights (w1, w2): D1 -> (1,0); D2, D3 -> (0,1); D4 -> (1/2,1/2).
/// The same weights route the output gradient back to the heads.
std::array<double, 2> assemble_weights(Subdomain s);
double assemble_piecewise(double g1, double g2, Subdomain s);

/// Adam with bias correction; state grows lazily to the parameter size.
struct AdamState {
    std::vector<double> m, v;
    long t = 0;
};

void adam_step(std::vector<double>& params, const std::vector<double>& grad, AdamState& state,
               double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

/// Checkpoint container: one-line JSON header (architecture, seed) followed
/// by the flat parameter vector as little-endian float64.
void save_checkpoint(const std::string& path, const MlpParams& p);
MlpParams load_checkpoint(const std::string& path);

}  // namespace greenmg
