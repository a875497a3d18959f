#include <doctest.h>

#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <vector>

#include "greenmg/errors.hpp"
#include "greenmg/grid.hpp"
#include "greenmg/mlmi.hpp"
#include "greenmg/problems.hpp"
#include "rng.hpp"

using namespace greenmg;

namespace {

constexpr double kPi = 3.14159265358979323846;

double simpson(double a, double b, int panels, double x) {
    double h = (b - a) / panels, s = 0.0;
    for (int i = 0; i < panels; ++i) {
        double l = a + i * h, r = l + h, mid = 0.5 * (l + r);
        s += (h / 6.0) * (std::log(std::abs(x - l)) + 4.0 * std::log(std::abs(x - mid)) +
                          std::log(std::abs(x - r)));
    }
    return s;
}

// Positively oriented integral of ln|x - t| over the width-long interval
// that ends (direction -1) or starts (direction +1) at the singularity x:
// dyadic grading toward x keeps composite Simpson accurate.
double graded_from_singularity(double x, double width, double direction) {
    double total = 0.0;
    double far = width;
    for (int j = 0; j < 40; ++j) {
        double near = far * 0.5;
        total += simpson(x + direction * near, x + direction * far, 64, x) * direction;
        far = near;
    }
    // Remaining sliver (0, far] in closed form; its measure is ~1e-12 * width.
    return total + far * (std::log(far) - 1.0);
}

// Quadrature oracle for the cell average: integral of ln|x - t| dt over
// [y - h/2, y + h/2], split at the singularity when x lies inside.
double log_cell_average_oracle(double x, double y, double h) {
    double a = y - h / 2, b = y + h / 2;
    if (x <= a || x >= b) return simpson(a, b, 4096, x) / h;
    double left = graded_from_singularity(x, x - a, -1.0);
    double right = graded_from_singularity(x, b - x, 1.0);
    return (left + right) / h;
}

double rel_err(const std::vector<double>& got, const std::vector<double>& want) {
    double num = 0.0, den = 0.0;
    for (size_t i = 0; i < got.size(); ++i) {
        num += (got[i] - want[i]) * (got[i] - want[i]);
        den += want[i] * want[i];
    }
    return std::sqrt(num / den);
}

std::filesystem::path temp_file(const std::string& name) {
    return std::filesystem::temp_directory_path() / name;
}

}  // namespace

TEST_CASE("poisson Green function values and symmetry") {
    CHECK(green_poisson_1d(0.25, 0.5) == 0.125);
    CHECK(green_poisson_1d(0.5, 0.5) == 0.25);
    CHECK(green_poisson_1d(0.75, 0.25) == 0.0625);
    rng::Rng gen(3);
    for (int t = 0; t < 50; ++t) {
        double x = gen.uniform(), y = gen.uniform();
        CHECK(green_poisson_1d(x, y) == green_poisson_1d(y, x));
        CHECK(green_poisson_1d(x, 0.0) == 0.0);
        CHECK(green_poisson_1d(x, 1.0) == 0.0);
    }
}

TEST_CASE("discrete log kernel matches the quadrature oracle") {
    // Diagonal closed form: ln(h/2) - 1.
    CHECK(log_kernel_discrete(0.3, 0.3, 0.25) ==
          doctest::Approx(std::log(0.125) - 1.0).epsilon(1e-13));
    CHECK(log_kernel_discrete(0.3, 0.3, 0.25) ==
          doctest::Approx(log_cell_average_oracle(0.3, 0.3, 0.25)).epsilon(1e-9));

    rng::Rng gen(4);
    for (int t = 0; t < 20; ++t) {
        double x = gen.uniform(-1.0, 1.0), y = gen.uniform(-1.0, 1.0);
        double h = gen.uniform(0.05, 0.3);
        double got = log_kernel_discrete(x, y, h);
        CHECK(got == doctest::Approx(log_cell_average_oracle(x, y, h)).epsilon(1e-8));
        CHECK(got == doctest::Approx(log_kernel_discrete(y, x, h)).epsilon(1e-13));
    }

    // Off-center singularity inside the cell.
    double inside = log_kernel_discrete(0.51, 0.5, 0.25);
    CHECK(inside == doctest::Approx(log_cell_average_oracle(0.51, 0.5, 0.25)).epsilon(1e-9));

    // Far field tends to the pointwise log within the midpoint-rule error.
    for (double r : {0.4, 0.6, 0.8}) {
        double h = 0.02;
        double got = log_kernel_discrete(r, 0.0, h);
        CHECK(std::abs(got - std::log(r)) <= 2.0 * h * h / (24.0 * r * r));
    }
}

TEST_CASE("disk Green function value, symmetry, boundary zero") {
    std::array<double, 2> x{0.5, 0.0}, y{0.0, 0.5};
    double want = std::log(8.0 / 17.0) / (4.0 * kPi);
    CHECK(green_disk_poisson_2d(x, y) == doctest::Approx(want).epsilon(1e-13));
    CHECK(want == doctest::Approx(-0.05999).epsilon(2e-4));

    rng::Rng gen(5);
    for (int t = 0; t < 100; ++t) {
        double rx = 0.9 * std::sqrt(gen.uniform()), ax = gen.uniform(0.0, 2.0 * kPi);
        double ry = 0.9 * std::sqrt(gen.uniform()), ay = gen.uniform(0.0, 2.0 * kPi);
        std::array<double, 2> p{rx * std::cos(ax), rx * std::sin(ax)};
        std::array<double, 2> q{ry * std::cos(ay), ry * std::sin(ay)};
        if (p == q) continue;
        CHECK(green_disk_poisson_2d(p, q) == doctest::Approx(green_disk_poisson_2d(q, p)).epsilon(1e-12));
        std::array<double, 2> edge{std::cos(ay), std::sin(ay)};
        CHECK(std::abs(green_disk_poisson_2d(p, edge)) <= 1e-12);
    }
    CHECK_THROWS_AS(green_disk_poisson_2d(x, x), SingularInput);
}

TEST_CASE("gp draws are deterministic with unit variance and set correlation") {
    GpSampler s(65, 1, 0.125);
    CHECK(s.sample(9) == s.sample(9));
    CHECK(s.sample(9) != s.sample(10));

    int draws = 600;
    std::vector<double> a(draws), b(draws);
    for (int i = 0; i < draws; ++i) {
        auto f = s.sample(1000 + static_cast<uint64_t>(i));
        a[i] = f[28];
        b[i] = f[36];  // lag 8 nodes = one length scale
    }
    double ma = std::accumulate(a.begin(), a.end(), 0.0) / draws;
    double mb = std::accumulate(b.begin(), b.end(), 0.0) / draws;
    double va = 0.0, vb = 0.0, cov = 0.0;
    for (int i = 0; i < draws; ++i) {
        va += (a[i] - ma) * (a[i] - ma);
        vb += (b[i] - mb) * (b[i] - mb);
        cov += (a[i] - ma) * (b[i] - mb);
    }
    va /= draws - 1;
    vb /= draws - 1;
    cov /= draws - 1;
    CHECK(std::abs(va - 1.0) <= 0.15);
    CHECK(std::abs(cov / std::sqrt(va * vb) - std::exp(-0.5)) <= 0.1);
}

TEST_CASE("2D gp draws share the statistics through the tensor factorization") {
    GpSampler s(17, 2, 0.25);
    int draws = 500;
    std::vector<double> a(draws), b(draws);
    for (int i = 0; i < draws; ++i) {
        auto f = s.sample(4000 + static_cast<uint64_t>(i));
        a[i] = f[8 * 17 + 8];
        b[i] = f[8 * 17 + 12];  // lag 4 nodes = one length scale along an axis
    }
    double ma = std::accumulate(a.begin(), a.end(), 0.0) / draws;
    double mb = std::accumulate(b.begin(), b.end(), 0.0) / draws;
    double va = 0.0, vb = 0.0, cov = 0.0;
    for (int i = 0; i < draws; ++i) {
        va += (a[i] - ma) * (a[i] - ma);
        vb += (b[i] - mb) * (b[i] - mb);
        cov += (a[i] - ma) * (b[i] - mb);
    }
    va /= draws - 1;
    vb /= draws - 1;
    cov /= draws - 1;
    CHECK(std::abs(va - 1.0) <= 0.15);
    CHECK(std::abs(cov / std::sqrt(va * vb) - std::exp(-0.5)) <= 0.1);
    CHECK_THROWS_AS(GpSampler(17, 2, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(GpSampler(17, 3, 0.2), UnsupportedDimension);
}

TEST_CASE("poisson solve matches the closed form and converges second order") {
    ProblemSpec spec = make_problem(ProblemKind::Poisson1d, 129);
    std::vector<double> f(129, 1.0);
    auto u = solve_reference(spec, f);
    std::vector<double> want(129);
    for (int i = 0; i < 129; ++i) {
        double x = i / 128.0;
        want[i] = 0.5 * x * (1.0 - x);
    }
    CHECK(rel_err(u, want) <= 1e-3);

    // f = x^2 has FD truncation error, so the order is visible: u = (x - x^4)/12.
    auto order_err = [](int n) {
        ProblemSpec s = make_problem(ProblemKind::Poisson1d, n);
        std::vector<double> f2(static_cast<size_t>(n)), w(static_cast<size_t>(n));
        for (int i = 0; i < n; ++i) {
            double x = static_cast<double>(i) / (n - 1);
            f2[static_cast<size_t>(i)] = x * x;
            w[static_cast<size_t>(i)] = (x - x * x * x * x) / 12.0;
        }
        return rel_err(solve_reference(s, f2), w);
    };
    double e33 = order_err(33), e65 = order_err(65);
    CHECK(e33 / e65 == doctest::Approx(4.0).epsilon(0.15));
}

TEST_CASE("2D poisson recovers a manufactured solution") {
    for (int n : {33, 65}) {
        ProblemSpec spec = make_problem(ProblemKind::Poisson2d, n);
        std::vector<double> f(static_cast<size_t>(n) * n), want(static_cast<size_t>(n) * n);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) {
                double x = static_cast<double>(i) / (n - 1), y = static_cast<double>(j) / (n - 1);
                double u = std::sin(kPi * x) * std::sin(kPi * y);
                want[static_cast<size_t>(i) * n + j] = u;
                f[static_cast<size_t>(i) * n + j] = 2.0 * kPi * kPi * u;
            }
        CHECK(rel_err(solve_reference(spec, f), want) <= 1e-2);
    }
}

TEST_CASE("airy with theta zero degenerates to poisson") {
    ProblemSpec airy = make_problem(ProblemKind::Airy1d, 65);
    airy.airy_theta = 0.0;
    ProblemSpec poisson = make_problem(ProblemKind::Poisson1d, 65);
    auto f = sample_gp_forcing(GridHierarchy(65, 1, 1), 0.03, 42).values;
    auto ua = solve_reference(airy, f);
    auto up = solve_reference(poisson, f);
    CHECK(rel_err(ua, up) <= 1e-12);
}

TEST_CASE("airy solve recovers a manufactured solution") {
    int n = 129;
    ProblemSpec spec = make_problem(ProblemKind::Airy1d, n);
    std::vector<double> f(static_cast<size_t>(n)), want(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
        double x = static_cast<double>(i) / (n - 1);
        double u = std::sin(kPi * x);
        want[static_cast<size_t>(i)] = u;
        f[static_cast<size_t>(i)] = kPi * kPi * u + 100.0 * x * u;
    }
    CHECK(rel_err(solve_reference(spec, f), want) <= 1e-3);
}

TEST_CASE("schrodinger solve recovers a manufactured solution") {
    int n = 129;
    ProblemSpec spec = make_problem(ProblemKind::Schrodinger1d, n);
    std::vector<double> f(static_cast<size_t>(n)), want(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
        double t = static_cast<double>(i) / (n - 1);
        double x = 6.0 * t - 3.0;
        double u = std::sin(kPi * t);
        double uxx = -(kPi / 6.0) * (kPi / 6.0) * u;
        double V = x * x + 1.5 * std::exp(-std::pow(4.0 * x, 4.0));
        want[static_cast<size_t>(i)] = u;
        f[static_cast<size_t>(i)] = -0.01 * uxx + V * u;
    }
    CHECK(rel_err(solve_reference(spec, f), want) <= 1e-3);
}

TEST_CASE("darcy with unit coefficient reduces to poisson") {
    int n = 17;
    ProblemSpec darcy = make_problem(ProblemKind::Darcy2d, n);
    ProblemSpec poisson = make_problem(ProblemKind::Poisson2d, n);
    auto f = sample_gp_forcing(GridHierarchy(n, 2, 1), 0.2, 7).values;
    std::vector<double> ones(static_cast<size_t>(n) * n, 1.0);
    auto ud = solve_reference(darcy, f, &ones);
    auto up = solve_reference(poisson, f);
    CHECK(rel_err(ud, up) <= 1e-12);
}

TEST_CASE("darcy coefficient is positive and deterministic") {
    auto a = darcy_coefficient(17, 99);
    CHECK(a == darcy_coefficient(17, 99));
    CHECK(a != darcy_coefficient(17, 100));
    for (double v : a) CHECK(v > 0.0);
}

TEST_CASE("exact kernels reproduce the reference solvers") {
    // Poisson: Green samples against the FD solve, quadrature-limited.
    ProblemSpec pspec = make_problem(ProblemKind::Poisson1d, 129);
    auto pk = exact_kernel_matrix(pspec);
    GridHierarchy pg(129, 1, 1);
    for (int i = 0; i < 10; ++i) {
        auto f = sample_gp_forcing(pg, 0.03, 500 + static_cast<uint64_t>(i)).values;
        auto dense = dense_apply(pk, f, 1.0 / 128, 1);
        auto fd = solve_reference(pspec, f);
        CHECK(rel_err(dense, fd) <= 2e-3);
    }

    // Log transform: the dense kernel path IS the solver, so they agree exactly.
    ProblemSpec lspec = make_problem(ProblemKind::Log1d, 65);
    auto lk = exact_kernel_matrix(lspec);
    auto f = sample_gp_forcing(GridHierarchy(65, 1, 1), 0.03, 123).values;
    CHECK(rel_err(dense_apply(lk, f, 1.0 / 64, 1), solve_reference(lspec, f)) <= 1e-13);
}

TEST_CASE("datasets have protocol shapes and reproducible content") {
    ProblemSpec spec = make_problem(ProblemKind::Poisson1d, 513);
    Dataset ds = generate_dataset(spec, 100, 2024);
    CHECK(ds.count == 100);
    CHECK(ds.forcings.size() == 100u * 513u);
    CHECK(ds.solutions.size() == 100u * 513u);
    CHECK(ds.exact_kernel.size() == 513u * 513u);
    CHECK(ds.coefficient.empty());
    for (int s = 0; s < 100; ++s) {
        CHECK(ds.solutions[static_cast<size_t>(s) * 513] == 0.0);
        CHECK(ds.solutions[static_cast<size_t>(s) * 513 + 512] == 0.0);
    }
    Dataset again = generate_dataset(spec, 100, 2024);
    CHECK(ds.forcings == again.forcings);
    CHECK(ds.solutions == again.solutions);

    CHECK_THROWS_AS(generate_dataset(spec, 0, 1), InvalidCount);
}

TEST_CASE("2D dataset carries the shared coefficient field") {
    ProblemSpec spec = make_problem(ProblemKind::Darcy2d, 17);
    Dataset ds = generate_dataset(spec, 4, 5);
    CHECK(ds.count == 4);
    CHECK(ds.forcings.size() == 4u * 17u * 17u);
    CHECK(ds.coefficient.size() == 17u * 17u);
    CHECK(ds.exact_kernel.empty());
    // Dirichlet edges are exact zeros.
    for (int j = 0; j < 17; ++j) {
        CHECK(ds.solutions[static_cast<size_t>(j)] == 0.0);
        CHECK(ds.solutions[static_cast<size_t>(16) * 17 + j] == 0.0);
        CHECK(ds.solutions[static_cast<size_t>(j) * 17] == 0.0);
        CHECK(ds.solutions[static_cast<size_t>(j) * 17 + 16] == 0.0);
    }
}

TEST_CASE("dataset files roundtrip and reject corruption") {
    ProblemSpec spec = make_problem(ProblemKind::Log1d, 33);
    Dataset ds = generate_dataset(spec, 3, 77);
    auto path = temp_file("greenmg_dataset_test.bin");
    save_dataset(path.string(), ds);
    Dataset back = load_dataset(path.string());
    CHECK(back.count == ds.count);
    CHECK(back.seed == ds.seed);
    CHECK(back.problem.kind == ds.problem.kind);
    CHECK(back.problem.n == ds.problem.n);
    CHECK(back.problem.length_scale == ds.problem.length_scale);
    CHECK(back.forcings == ds.forcings);
    CHECK(back.solutions == ds.solutions);
    CHECK(back.exact_kernel == ds.exact_kernel);

    {
        std::fstream fio(path, std::ios::in | std::ios::out | std::ios::binary);
        fio.seekg(-5, std::ios::end);
        char b = 0;
        fio.read(&b, 1);
        b = static_cast<char>(b ^ 0x3c);
        fio.seekp(-5, std::ios::end);
        fio.write(&b, 1);
    }
    CHECK_THROWS_AS(load_dataset(path.string()), IoFailure);
    CHECK_THROWS_AS(load_dataset("/nonexistent/ds.bin"), IoFailure);
    std::filesystem::remove(path);
}

TEST_CASE("problem names roundtrip") {
    for (auto kind : {ProblemKind::Log1d, ProblemKind::Poisson1d, ProblemKind::Schrodinger1d,
                      ProblemKind::Airy1d, ProblemKind::Poisson2d, ProblemKind::Darcy2d}) {
        CHECK(problem_from_name(problem_name(kind)) == kind);
    }
    CHECK_THROWS_AS(problem_from_name("heat3d"), std::invalid_argument);
    CHECK(problem_dim(ProblemKind::Poisson2d) == 2);
    CHECK(problem_dim(ProblemKind::Airy1d) == 1);
    CHECK(problem_has_exact_kernel(ProblemKind::Poisson1d));
    CHECK(problem_has_exact_kernel(ProblemKind::Log1d));
    CHECK(!problem_has_exact_kernel(ProblemKind::Darcy2d));
}
