#include "greenmg/problems.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include "greenmg/errors.hpp"
#include "greenmg/io.hpp"
#include "rng.hpp"

namespace greenmg {

ProblemKind problem_from_name(const std::string& name) {
    if (name == "log1d") return ProblemKind::Log1d;
    if (name == "poisson1d") return ProblemKind::Poisson1d;
    if (name == "schrodinger1d") return ProblemKind::Schrodinger1d;
    if (name == "airy1d") return ProblemKind::Airy1d;
    if (name == "poisson2d") return ProblemKind::Poisson2d;
    if (name == "darcy2d") return ProblemKind::Darcy2d;
    throw std::invalid_argument("unknown problem name: " + name);
}

std::string problem_name(ProblemKind kind) {
    switch (kind) {
        case ProblemKind::Log1d:
            return "log1d";
        case ProblemKind::Poisson1d:
            return "poisson1d";
        case ProblemKind::Schrodinger1d:
            return "schrodinger1d";
        case ProblemKind::Airy1d:
            return "airy1d";
        case ProblemKind::Poisson2d:
            return "poisson2d";
        case ProblemKind::Darcy2d:
            return "darcy2d";
    }
    throw std::invalid_argument("unknown problem kind");
}

int problem_dim(ProblemKind kind) {
    return (kind == ProblemKind::Poisson2d || kind == ProblemKind::Darcy2d) ? 2 : 1;
}

bool problem_has_exact_kernel(ProblemKind kind) {
    return kind == ProblemKind::Log1d || kind == ProblemKind::Poisson1d;
}

ProblemSpec make_problem(ProblemKind kind, int n) {
    ProblemSpec spec;
    spec.kind = kind;
    spec.n = n;
    spec.d = problem_dim(kind);
    spec.length_scale = spec.d == 1 ? 0.03 : 0.2;
    return spec;
}

double green_poisson_1d(double x, double y) { return x - y <= 0.0 ? x * (1.0 - y) : y * (1.0 - x); }

namespace {

// s * (ln|s| - 1) extended by continuity to 0 at s = 0.
inline double log_antiderivative(double s) {
    return s == 0.0 ? 0.0 : s * (std::log(std::abs(s)) - 1.0);
}

}  // namespace

double log_kernel_discrete(double x, double y, double h) {
    const double t = x - y;
    return (log_antiderivative(t + 0.5 * h) - log_antiderivative(t - 0.5 * h)) / h;
}

double green_disk_poisson_2d(const std::array<double, 2>& x, const std::array<double, 2>& y) {
    const double dx = x[0] - y[0];
    const double dy = x[1] - y[1];
    const double num = dx * dx + dy * dy;
    if (num == 0.0) throw SingularInput("disk Green's function evaluated on the diagonal");
    const double cross = x[0] * y[1] - x[1] * y[0];
    const double dot1 = x[0] * y[0] + x[1] * y[1] - 1.0;
    const double den = cross * cross + dot1 * dot1;
    return std::log(num / den) / (4.0 * 3.14159265358979323846);
}

GpSampler::GpSampler(int n, int d, double length_scale) : n_(n), d_(d) {
    if (n < 2) throw InvalidCount("GP sampler needs at least two nodes per axis");
    if (d != 1 && d != 2) throw UnsupportedDimension("GP sampler supports d in {1,2}");
    if (!(length_scale > 0.0)) throw std::invalid_argument("length scale must be positive");

    const double inv = 1.0 / (2.0 * length_scale * length_scale);
    Eigen::MatrixXd cov(n, n);
    for (int i = 0; i < n; ++i) {
        const double ti = static_cast<double>(i) / (n - 1);
        for (int j = 0; j < n; ++j) {
            const double tj = static_cast<double>(j) / (n - 1);
            cov(i, j) = std::exp(-(ti - tj) * (ti - tj) * inv);
        }
        cov(i, i) += 1e-10;
    }
    Eigen::LLT<Eigen::MatrixXd> llt(cov);
    if (llt.info() != Eigen::Success) {
        throw CovarianceNotPD("jittered GP covariance is not positive definite");
    }
    chol_ = llt.matrixL();
}

std::vector<double> GpSampler::sample(uint64_t seed) const {
    rng::Rng gen(seed);
    if (d_ == 1) {
        Eigen::VectorXd z(n_);
        for (int i = 0; i < n_; ++i) z(i) = gen.normal();
        Eigen::VectorXd x = chol_ * z;
        return std::vector<double>(x.data(), x.data() + n_);
    }
    // Axis-separable covariance: L Z L^T has covariance cov (x) cov.
    Eigen::MatrixXd z(n_, n_);
    for (int i = 0; i < n_; ++i) {
        for (int j = 0; j < n_; ++j) z(i, j) = gen.normal();
    }
    Eigen::MatrixXd x = chol_ * z * chol_.transpose();
    std::vector<double> out(static_cast<std::size_t>(n_) * n_);
    for (int i = 0; i < n_; ++i) {
        for (int j = 0; j < n_; ++j) out[static_cast<std::size_t>(i) * n_ + j] = x(i, j);
    }
    return out;
}

Field sample_gp_forcing(const GridHierarchy& g, double length_scale, uint64_t seed) {
    GpSampler sampler(g.level(0).n, g.dim(), length_scale);
    return Field{0, sampler.sample(seed)};
}

std::vector<double> darcy_coefficient(int n, uint64_t seed) {
    GpSampler sampler(n, 2, 0.2);
    std::vector<double> a = sampler.sample(seed);
    for (double& v : a) v = std::exp(v);
    return a;
}

namespace {

// Symmetric tridiagonal solve over interior nodes with constant off-diagonal
// and zero Dirichlet ends; diag holds the n-2 interior diagonal entries.
std::vector<double> tridiag_interior_solve(int n, const std::vector<double>& diag, double off,
                                           const std::vector<double>& f) {
    const int m = n - 2;
    std::vector<double> u(static_cast<std::size_t>(n), 0.0);
    if (m <= 0) return u;
    std::vector<double> c(m), d(m);
    double piv = diag[0];
    c[0] = off / piv;
    d[0] = f[1] / piv;
    for (int r = 1; r < m; ++r) {
        piv = diag[r] - off * c[r - 1];
        c[r] = off / piv;
        d[r] = (f[r + 1] - off * d[r - 1]) / piv;
    }
    for (int r = m - 2; r >= 0; --r) d[r] -= c[r] * d[r + 1];
    for (int r = 0; r < m; ++r) u[r + 1] = d[r];
    return u;
}

double schrodinger_potential(double x) {
    const double x4 = 4.0 * x;
    const double p4 = x4 * x4 * x4 * x4;
    return x * x + 1.5 * std::exp(-p4);
}

// Five-point Dirichlet solve on the unit square; `a` (nodal, row-major)
// selects the variable-coefficient operator with harmonic-mean faces,
// nullptr the constant-coefficient Laplacian.
std::vector<double> solve_2d(int n, const std::vector<double>& f, const std::vector<double>* a) {
    const int m = n - 2;
    std::vector<double> u(static_cast<std::size_t>(n) * n, 0.0);
    if (m <= 0) return u;

    const double h = 1.0 / (n - 1);
    const double inv_h2 = 1.0 / (h * h);
    const auto node = [n](int i, int j) { return static_cast<std::size_t>(i) * n + j; };
    const auto interior = [m](int i, int j) { return (i - 1) * m + (j - 1); };
    const auto face = [&](int i0, int j0, int i1, int j1) {
        if (a == nullptr) return 1.0;
        const double p = (*a)[node(i0, j0)];
        const double q = (*a)[node(i1, j1)];
        return 2.0 * p * q / (p + q);
    };

    Eigen::SparseMatrix<double> mat(m * m, m * m);
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(static_cast<std::size_t>(m) * m * 5);
    Eigen::VectorXd rhs(m * m);
    for (int i = 1; i <= m; ++i) {
        for (int j = 1; j <= m; ++j) {
            const int row = interior(i, j);
            const double an = face(i, j, i - 1, j);
            const double as = face(i, j, i + 1, j);
            const double aw = face(i, j, i, j - 1);
            const double ae = face(i, j, i, j + 1);
            trip.emplace_back(row, row, (an + as + aw + ae) * inv_h2);
            if (i > 1) trip.emplace_back(row, interior(i - 1, j), -an * inv_h2);
            if (i < m) trip.emplace_back(row, interior(i + 1, j), -as * inv_h2);
            if (j > 1) trip.emplace_back(row, interior(i, j - 1), -aw * inv_h2);
            if (j < m) trip.emplace_back(row, interior(i, j + 1), -ae * inv_h2);
            rhs(row) = f[node(i, j)];
        }
    }
    mat.setFromTriplets(trip.begin(), trip.end());

    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> solver(mat);
    if (solver.info() != Eigen::Success) throw SolveFailure("factorization of the 2D operator failed");
    Eigen::VectorXd sol = solver.solve(rhs);
    if (solver.info() != Eigen::Success) throw SolveFailure("2D backsolve failed");

    const double rhs_norm = rhs.norm();
    if (rhs_norm > 0.0) {
        const double resid = (mat * sol - rhs).norm() / rhs_norm;
        if (resid > 1e-10) throw SolveFailure("2D solve residual above tolerance");
    }

    for (int i = 1; i <= m; ++i) {
        for (int j = 1; j <= m; ++j) u[node(i, j)] = sol(interior(i, j));
    }
    return u;
}

}  // namespace

std::vector<double> solve_reference(const ProblemSpec& spec, const std::vector<double>& f,
                                    const std::vector<double>* coeff) {
    const int n = spec.n;
    const std::size_t total = spec.d == 1 ? static_cast<std::size_t>(n)
                                          : static_cast<std::size_t>(n) * n;
    if (f.size() != total) throw ShapeMismatch("forcing length does not match the problem grid");
    const double h = 1.0 / (n - 1);

    switch (spec.kind) {
        case ProblemKind::Log1d: {
            // Native domain [-1,1]: u(x) = integral of ln|x-y| f(y) dy,
            // evaluated as the analytic cell-averaged kernel times h.
            std::vector<double> u(static_cast<std::size_t>(n), 0.0);
            for (int i = 0; i < n; ++i) {
                const double xi = 2.0 * (static_cast<double>(i) * h) - 1.0;
                double acc = 0.0;
                for (int j = 0; j < n; ++j) {
                    const double yj = 2.0 * (static_cast<double>(j) * h) - 1.0;
                    acc += log_kernel_discrete(xi, yj, 2.0 * h) * f[j];
                }
                u[i] = 2.0 * h * acc;
            }
            return u;
        }
        case ProblemKind::Poisson1d: {
            std::vector<double> diag(static_cast<std::size_t>(n - 2), 2.0 / (h * h));
            return tridiag_interior_solve(n, diag, -1.0 / (h * h), f);
        }
        case ProblemKind::Airy1d: {
            const double t2 = spec.airy_theta * spec.airy_theta;
            std::vector<double> diag(static_cast<std::size_t>(n - 2));
            for (int i = 1; i <= n - 2; ++i) {
                diag[i - 1] = 2.0 / (h * h) + t2 * (static_cast<double>(i) * h);
            }
            return tridiag_interior_solve(n, diag, -1.0 / (h * h), f);
        }
        case ProblemKind::Schrodinger1d: {
            // Native domain [-3,3] via x = 6t - 3; equation coefficient 0.1.
            const double hx = 6.0 * h;
            const double c = 0.1 * 0.1;
            std::vector<double> diag(static_cast<std::size_t>(n - 2));
            for (int i = 1; i <= n - 2; ++i) {
                const double x = 6.0 * (static_cast<double>(i) * h) - 3.0;
                diag[i - 1] = 2.0 * c / (hx * hx) + schrodinger_potential(x);
            }
            return tridiag_interior_solve(n, diag, -c / (hx * hx), f);
        }
        case ProblemKind::Poisson2d:
            return solve_2d(n, f, nullptr);
        case ProblemKind::Darcy2d: {
            if (coeff == nullptr || coeff->size() != total) {
                throw ShapeMismatch("darcy2d needs a nodal coefficient field");
            }
            return solve_2d(n, f, coeff);
        }
    }
    throw std::invalid_argument("unknown problem kind");
}

std::vector<double> exact_kernel_matrix(const ProblemSpec& spec) {
    const int n = spec.n;
    const double h = 1.0 / (n - 1);
    std::vector<double> g(static_cast<std::size_t>(n) * n);
    switch (spec.kind) {
        case ProblemKind::Poisson1d:
            for (int i = 0; i < n; ++i) {
                for (int j = 0; j < n; ++j) {
                    g[static_cast<std::size_t>(i) * n + j] =
                        green_poisson_1d(static_cast<double>(i) * h, static_cast<double>(j) * h);
                }
            }
            return g;
        case ProblemKind::Log1d:
            // Mapped kernel: y = 2t-1 contributes a factor 2 from dy and a
            // doubled cell width, so K(s,t) = 2 * kernel(2s-1, 2t-1, 2h).
            for (int i = 0; i < n; ++i) {
                const double xi = 2.0 * (static_cast<double>(i) * h) - 1.0;
                for (int j = 0; j < n; ++j) {
                    const double yj = 2.0 * (static_cast<double>(j) * h) - 1.0;
                    g[static_cast<std::size_t>(i) * n + j] =
                        2.0 * log_kernel_discrete(xi, yj, 2.0 * h);
                }
            }
            return g;
        default:
            throw std::invalid_argument("no exact kernel for " + problem_name(spec.kind));
    }
}

Dataset generate_dataset(const ProblemSpec& spec, int count, uint64_t seed) {
    if (count < 1) throw InvalidCount("dataset size must be at least 1");

    Dataset ds;
    ds.problem = spec;
    ds.seed = seed;
    ds.count = count;

    const std::size_t total = spec.d == 1 ? static_cast<std::size_t>(spec.n)
                                          : static_cast<std::size_t>(spec.n) * spec.n;
    ds.forcings.resize(total * count);
    ds.solutions.resize(total * count);

    if (spec.kind == ProblemKind::Darcy2d) {
        ds.coefficient = darcy_coefficient(spec.n, rng::derive(seed, 2, 0));
    }
    if (problem_has_exact_kernel(spec.kind)) {
        ds.exact_kernel = exact_kernel_matrix(spec);
    }

    GpSampler sampler(spec.n, spec.d, spec.length_scale);
    const std::vector<double>* coeff =
        ds.coefficient.empty() ? nullptr : &ds.coefficient;
    for (int s = 0; s < count; ++s) {
        const std::vector<double> f = sampler.sample(rng::derive(seed, 1, static_cast<uint64_t>(s)));
        const std::vector<double> u = solve_reference(spec, f, coeff);
        std::copy(f.begin(), f.end(), ds.forcings.begin() + static_cast<std::ptrdiff_t>(s * total));
        std::copy(u.begin(), u.end(), ds.solutions.begin() + static_cast<std::ptrdiff_t>(s * total));
    }
    return ds;
}

void save_dataset(const std::string& path, const Dataset& ds) {
    nlohmann::json header;
    header["format"] = "greenmg-dataset";
    header["version"] = 1;
    header["problem"] = problem_name(ds.problem.kind);
    header["n"] = ds.problem.n;
    header["d"] = ds.problem.d;
    header["count"] = ds.count;
    header["seed"] = ds.seed;
    header["length_scale"] = ds.problem.length_scale;
    header["has_coefficient"] = !ds.coefficient.empty();
    header["has_exact_kernel"] = !ds.exact_kernel.empty();

    std::vector<double> payload;
    payload.reserve(ds.forcings.size() + ds.solutions.size() + ds.coefficient.size() +
                    ds.exact_kernel.size());
    payload.insert(payload.end(), ds.forcings.begin(), ds.forcings.end());
    payload.insert(payload.end(), ds.solutions.begin(), ds.solutions.end());
    payload.insert(payload.end(), ds.coefficient.begin(), ds.coefficient.end());
    payload.insert(payload.end(), ds.exact_kernel.begin(), ds.exact_kernel.end());
    write_blob_atomic(path, header, payload.data(), payload.size());
}

Dataset load_dataset(const std::string& path) {
    const Blob blob = read_blob(path);
    const auto& h = blob.header;
    if (!h.contains("format") || h["format"] != "greenmg-dataset") {
        throw IoFailure("not a dataset file: " + path);
    }

    Dataset ds;
    ds.problem = make_problem(problem_from_name(h["problem"].get<std::string>()), h["n"].get<int>());
    ds.problem.length_scale = h.value("length_scale", ds.problem.length_scale);
    ds.seed = h.value("seed", static_cast<uint64_t>(0));
    ds.count = h["count"].get<int>();
    if (ds.count < 1) throw IoFailure("dataset header has a non-positive count");

    const std::size_t total = ds.problem.d == 1
                                  ? static_cast<std::size_t>(ds.problem.n)
                                  : static_cast<std::size_t>(ds.problem.n) * ds.problem.n;
    const std::size_t fields = total * ds.count;
    std::size_t expect = 2 * fields;
    if (h.value("has_coefficient", false)) expect += total;
    if (h.value("has_exact_kernel", false)) expect += total * total;
    if (blob.payload.size() != expect) throw IoFailure("dataset payload size mismatch in " + path);

    auto it = blob.payload.begin();
    ds.forcings.assign(it, it + static_cast<std::ptrdiff_t>(fields));
    it += static_cast<std::ptrdiff_t>(fields);
    ds.solutions.assign(it, it + static_cast<std::ptrdiff_t>(fields));
    it += static_cast<std::ptrdiff_t>(fields);
    if (h.value("has_coefficient", false)) {
        ds.coefficient.assign(it, it + static_cast<std::ptrdiff_t>(total));
        it += static_cast<std::ptrdiff_t>(total);
    }
    if (h.value("has_exact_kernel", false)) {
        ds.exact_kernel.assign(it, it + static_cast<std::ptrdiff_t>(total * total));
    }
    return ds;
}

}  // namespace greenmg
