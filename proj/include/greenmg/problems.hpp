#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "greenmg/grid.hpp"

namespace greenmg {

/// Benchmark problems. All are posed on the unit interval/square after an
/// affine map of the native domain ([-1,1] for log1d, [-3,3] for
/// schrodinger1d); kernels are learned in mapped coordinates.
enum class ProblemKind : uint8_t {
    Log1d,
    Poisson1d,
    Schrodinger1d,
    Airy1d,
    Poisson2d,
    Darcy2d,
};

ProblemKind problem_from_name(const std::string& name);
std::string problem_name(ProblemKind kind);
int problem_dim(ProblemKind kind);
bool problem_has_exact_kernel(ProblemKind kind);

struct ProblemSpec {
    ProblemKind kind = ProblemKind::Poisson1d;
    int n = 129;               // points per axis (dyadic + 1)
    int d = 1;                 // implied by kind
    double length_scale = 0.03;  // GP forcing length scale
    double airy_theta = 10.0;    // airy1d potential coefficient
};

/// Fills the dimension and the default forcing length scale (0.03 in 1D,
/// 0.2 in 2D).
ProblemSpec make_problem(ProblemKind kind, int n);

/// Green's function of -u'' = f on [0,1] with homogeneous Dirichlet ends.
double green_poisson_1d(double x, double y);

/// Cell-averaged logarithmic kernel (1/h) * integral of ln|x-y'| over the
/// cell [y-h/2, y+h/2]; the t*ln|t| -> 0 limit is taken as 0, so the value
/// is finite on the diagonal.
double log_kernel_discrete(double x, double y, double h);

/// Green's function of the Poisson problem on the unit disk.
/// Throws SingularInput at x == y.
double green_disk_poisson_2d(const std::array<double, 2>& x, const std::array<double, 2>& y);

/// Mean-zero Gaussian process with squared-exponential covariance
/// exp(-r^2 / (2 l^2)) on the nodes of [0,1]^d; the jittered Cholesky factor
/// (diagonal + 1e-10) is computed once. 2D draws use the tensor-product
/// structure of the covariance, so they cost two small triangular products.
class GpSampler {
  public:
    GpSampler(int n, int d, double length_scale);

    int n() const { return n_; }
    int d() const { return d_; }

    /// One draw; deterministic per seed.
    std::vector<double> sample(uint64_t seed) const;

  private:
    int n_, d_;
    Eigen::MatrixXd chol_;  // axis-covariance Cholesky factor, n x n
};

Field sample_gp_forcing(const GridHierarchy& g, double length_scale, uint64_t seed);

/// Darcy permeability a(x) = exp(g(x)), g a mean-zero GP draw (length
/// scale 0.2) on the 2D grid.
std::vector<double> darcy_coefficient(int n, uint64_t seed);

/// Reference solution on the mapped grid: dense analytic matvec for log1d,
/// second-order centered finite differences with homogeneous Dirichlet
/// boundaries otherwise (tridiagonal in 1D, five-point in 2D, harmonic-mean
/// face coefficients for darcy2d). `coeff` supplies the nodal a field for
/// darcy2d and is ignored elsewhere.
std::vector<double> solve_reference(const ProblemSpec& spec, const std::vector<double>& f,
                                    const std::vector<double>* coeff = nullptr);

/// Exact dense kernel matrix (n^d x n^d, row-major) in mapped coordinates;
/// available for poisson1d and log1d.
std::vector<double> exact_kernel_matrix(const ProblemSpec& spec);

struct Dataset {
    ProblemSpec problem;
    uint64_t seed = 0;
    int count = 0;
    std::vector<double> forcings;     // count * n^d, one field per sample
    std::vector<double> solutions;    // count * n^d
    std::vector<double> coefficient;  // darcy2d: the shared a field, else empty
    std::vector<double> exact_kernel;  // n^d x n^d when available, else empty
};

/// N forcings from per-sample derived seeds plus their reference solutions;
/// attaches the exact kernel when the problem has one. Bit-identical for a
/// given (spec, count, seed).
Dataset generate_dataset(const ProblemSpec& spec, int count, uint64_t seed);

void save_dataset(const std::string& path, const Dataset& ds);
Dataset load_dataset(const std::string& path);

}  // namespace greenmg
