#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <set>
#include <sstream>
#include <vector>

#include "greenmg/errors.hpp"
#include "greenmg/grid.hpp"
#include "greenmg/mlmi.hpp"
#include "rng.hpp"

using namespace greenmg;

namespace {

// Evaluate a kernel function at every stored sample position, aligned with
// plan.points().points.
template <typename G>
std::vector<double> sample_kernel(const MlmiPlan& plan, G&& kernel) {
    const auto& pts = plan.points().points;
    const int d = plan.points().d;
    std::vector<double> s(pts.size());
    for (size_t p = 0; p < pts.size(); ++p) {
        const auto& kp = pts[p];
        double h = plan.grid().level(kp.level).h;
        double x[2] = {kp.i[0] * h, kp.i[1] * h};
        double y[2] = {kp.j[0] * h, kp.j[1] * h};
        s[p] = kernel(x, y, d);
    }
    return s;
}

// Full kernel matrix on the fine grid, row-major.
template <typename G>
std::vector<double> dense_kernel(const GridHierarchy& g, G&& kernel) {
    const int d = g.dim();
    const int n = g.level(0).n;
    const double h = g.level(0).h;
    const long total = g.node_count(0);
    std::vector<double> mat(static_cast<size_t>(total) * total);
    for (long r = 0; r < total; ++r) {
        double x[2] = {d == 1 ? r * h : (r / n) * h, d == 1 ? 0.0 : (r % n) * h};
        for (long c = 0; c < total; ++c) {
            double y[2] = {d == 1 ? c * h : (c / n) * h, d == 1 ? 0.0 : (c % n) * h};
            mat[static_cast<size_t>(r) * total + c] = kernel(x, y, d);
        }
    }
    return mat;
}

std::vector<double> random_values(size_t count, uint64_t seed) {
    rng::Rng gen(seed);
    std::vector<double> v(count);
    for (auto& x : v) x = gen.normal();
    return v;
}

double rel_err(const std::vector<double>& got, const std::vector<double>& want) {
    double num = 0.0, den = 0.0;
    for (size_t i = 0; i < got.size(); ++i) {
        num += (got[i] - want[i]) * (got[i] - want[i]);
        den += want[i] * want[i];
    }
    return std::sqrt(num / den);
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

uint64_t key_of(const KernelPoint& p) {
    return (static_cast<uint64_t>(p.level) << 56) ^ (static_cast<uint64_t>(p.i[0]) << 42) ^
           (static_cast<uint64_t>(p.i[1]) << 28) ^ (static_cast<uint64_t>(p.j[0]) << 14) ^
           static_cast<uint64_t>(p.j[1]);
}

bool lex_less(const KernelPoint& a, const KernelPoint& b) {
    if (a.level != b.level) return a.level < b.level;
    if (a.i != b.i) return a.i < b.i;
    return a.j < b.j;
}

}  // namespace

TEST_CASE("tiny 1D enumeration is the frozen reference set") {
    GridHierarchy g(5, 1, 1);
    auto s = enumerate_points(g, 1);
    CHECK(s.points.size() == 23);
    CHECK(point_fraction(s, g) == doctest::Approx(0.92).epsilon(1e-14));
}

TEST_CASE("m = 0 keeps exactly the coarsest block") {
    for (int d : {1, 2}) {
        int n = d == 1 ? 65 : 17;
        for (int k : {1, 2}) {
            GridHierarchy g(n, d, k);
            auto s = enumerate_points(g, 0);
            long nk = g.node_count(k);
            REQUIRE(static_cast<long>(s.points.size()) == nk * nk);
            for (const auto& p : s.points) CHECK(p.level == k);
            double total = static_cast<double>(g.node_count(0));
            CHECK(point_fraction(s, g) ==
                  doctest::Approx((nk / total) * (nk / total)).epsilon(1e-14));
        }
    }
}

TEST_CASE("point sets are sorted, unique, and canonical") {
    for (int d : {1, 2}) {
        int n = d == 1 ? 33 : 17;
        GridHierarchy g(n, d, 2);
        for (int m : {1, 2, 3}) {
            auto s = enumerate_points(g, m);
            std::set<uint64_t> seen;
            for (size_t p = 0; p + 1 < s.points.size(); ++p)
                CHECK(lex_less(s.points[p], s.points[p + 1]));
            for (const auto& p : s.points) {
                CHECK(seen.insert(key_of(p)).second);
                bool odd = (p.i[0] | p.i[1] | p.j[0] | p.j[1]) & 1;
                CHECK((p.level == 2 || odd));
                int nl = g.level(p.level).n;
                for (int a = 0; a < d; ++a) {
                    CHECK(p.i[a] >= 0);
                    CHECK(p.i[a] < nl);
                    CHECK(p.j[a] >= 0);
                    CHECK(p.j[a] < nl);
                }
            }
            // Complete coarsest block.
            long nk = g.node_count(2);
            long coarse = std::count_if(s.points.begin(), s.points.end(),
                                        [](const KernelPoint& p) { return p.level == 2; });
            CHECK(coarse == nk * nk);
        }
    }
}

TEST_CASE("larger windows only add points") {
    GridHierarchy g(65, 1, 2);
    size_t prev = 0;
    for (int m : {0, 1, 3, 7}) {
        auto s = enumerate_points(g, m);
        CHECK(s.points.size() > prev);
        prev = s.points.size();
    }
}

TEST_CASE("multilevel product is exact for affine kernels") {
    auto affine = [](const double* x, const double* y, int d) {
        double v = 0.7 + 1.3 * x[0] - 0.4 * y[0];
        if (d == 2) v += 0.9 * x[1] + 2.1 * y[1];
        return v;
    };
    for (int d : {1, 2}) {
        int n = d == 1 ? 65 : 17;
        GridHierarchy g(n, d, 2);
        Field f{0, random_values(static_cast<size_t>(g.node_count(0)), 7)};
        auto mat = dense_kernel(g, affine);
        auto want = dense_apply(mat, f.values, g.level(0).h, d);
        for (int m : {0, 1, 3}) {
            MlmiPlan plan(g, m);
            auto got = mlmi_apply(plan, sample_kernel(plan, affine), f);
            CHECK(rel_err(got, want) <= 1e-12);
        }
    }
}

TEST_CASE("full correction windows reproduce the dense product") {
    auto rough = [](const double* x, const double* y, int d) {
        double v = std::sin(5.0 * x[0] + 1.0) * std::cos(3.0 * y[0]);
        if (d == 2) v += std::exp(-(x[1] - y[1]) * (x[1] - y[1]));
        return v;
    };
    for (int d : {1, 2}) {
        int n = d == 1 ? 33 : 9;
        GridHierarchy g(n, d, 2);
        Field f{0, random_values(static_cast<size_t>(g.node_count(0)), 9)};
        auto want = dense_apply(dense_kernel(g, rough), f.values, g.level(0).h, d);
        MlmiPlan plan(g, n);  // window radius 2m covers every level
        auto got = mlmi_apply(plan, sample_kernel(plan, rough), f);
        CHECK(rel_err(got, want) <= 1e-12);
    }
}

TEST_CASE("log kernel error decreases with window size") {
    auto logk = [](const double* x, const double* y, int) {
        double r2 = (x[0] - y[0]) * (x[0] - y[0]) + 1e-6;
        return 0.5 * std::log(r2);
    };
    GridHierarchy g(65, 1, 1);
    Field f{0, random_values(65, 13)};
    auto want = dense_apply(dense_kernel(g, logk), f.values, g.level(0).h, 1);
    double prev = 1e9;
    for (int m : {0, 1, 3, 7}) {
        MlmiPlan plan(g, m);
        auto got = mlmi_apply(plan, sample_kernel(plan, logk), f);
        double err = rel_err(got, want);
        CHECK(err < prev);
        prev = err;
    }
    CHECK(prev <= 1e-3);
}

TEST_CASE("product is linear in the samples") {
    GridHierarchy g(33, 1, 2);
    MlmiPlan plan(g, 2);
    size_t count = plan.points().points.size();
    Field f{0, random_values(33, 17)};
    auto s1 = random_values(count, 18);
    auto s2 = random_values(count, 19);
    std::vector<double> sum(count);
    for (size_t i = 0; i < count; ++i) sum[i] = s1[i] + 2.5 * s2[i];
    auto u1 = mlmi_apply(plan, s1, f);
    auto u2 = mlmi_apply(plan, s2, f);
    auto us = mlmi_apply(plan, sum, f);
    for (size_t i = 0; i < us.size(); ++i)
        CHECK(us[i] == doctest::Approx(u1[i] + 2.5 * u2[i]).epsilon(1e-12));
}

TEST_CASE("adjoint satisfies the transpose identity") {
    for (int d : {1, 2}) {
        int n = d == 1 ? 33 : 9;
        GridHierarchy g(n, d, 2);
        MlmiPlan plan(g, 2);
        size_t count = plan.points().points.size();
        long total = g.node_count(0);
        for (int trial = 0; trial < 20; ++trial) {
            uint64_t base = static_cast<uint64_t>(1000 * d + 10 * trial);
            auto s = random_values(count, base);
            Field f{0, random_values(static_cast<size_t>(total), base + 1)};
            auto w = random_values(static_cast<size_t>(total), base + 2);
            double lhs = dot(mlmi_apply(plan, s, f), w);
            double rhs = dot(s, mlmi_adjoint(plan, f, w));
            CHECK(std::abs(lhs - rhs) <= 1e-12 * (std::abs(lhs) + 1.0));
        }
    }
}

TEST_CASE("adjoint matches finite differences of the product") {
    GridHierarchy g(17, 1, 1);
    MlmiPlan plan(g, 1);
    size_t count = plan.points().points.size();
    auto s = random_values(count, 31);
    Field f{0, random_values(17, 32)};
    auto w = random_values(17, 33);
    auto grad = mlmi_adjoint(plan, f, w);
    rng::Rng pick(34);
    for (int trial = 0; trial < 10; ++trial) {
        size_t idx = static_cast<size_t>(pick.uniform() * static_cast<double>(count));
        double h = 1e-6;
        auto sp = s, sm = s;
        sp[idx] += h;
        sm[idx] -= h;
        double fd = (dot(mlmi_apply(plan, sp, f), w) - dot(mlmi_apply(plan, sm, f), w)) / (2 * h);
        CHECK(grad[idx] == doctest::Approx(fd).epsilon(1e-6));
    }
}

TEST_CASE("apply validates shapes") {
    GridHierarchy g(17, 1, 1);
    MlmiPlan plan(g, 1);
    size_t count = plan.points().points.size();
    Field bad_level{1, std::vector<double>(9, 0.0)};
    CHECK_THROWS_AS(mlmi_apply(plan, std::vector<double>(count, 0.0), bad_level), ShapeMismatch);
    Field short_field{0, std::vector<double>(16, 0.0)};
    CHECK_THROWS_AS(mlmi_apply(plan, std::vector<double>(count, 0.0), short_field), ShapeMismatch);
    Field ok{0, std::vector<double>(17, 0.0)};
    CHECK_THROWS_AS(mlmi_apply(plan, std::vector<double>(count - 1, 0.0), ok), ShapeMismatch);
    CHECK_THROWS_AS(mlmi_adjoint(plan, ok, std::vector<double>(16, 0.0)), ShapeMismatch);
}

TEST_CASE("point CSV lists roles by name") {
    GridHierarchy g(5, 1, 1);
    auto s = enumerate_points(g, 1);
    std::ostringstream out;
    write_point_csv(s, out);
    std::string text = out.str();
    CHECK(text.find("level,i,j,roles") == 0);
    CHECK(text.find("coarsest-full") != std::string::npos);
    std::istringstream in(text);
    std::string line;
    size_t rows = 0;
    while (std::getline(in, line))
        if (!line.empty()) ++rows;
    CHECK(rows == s.points.size() + 1);
}

TEST_CASE("negative window size is rejected") {
    GridHierarchy g(17, 1, 1);
    CHECK_THROWS_AS(enumerate_points(g, -1), ShapeMismatch);
    CHECK_THROWS_AS(MlmiPlan(g, -1), ShapeMismatch);
}
