#include "greenmg/mlmi.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <ostream>
#include <string>
#include <unordered_map>

#include "greenmg/errors.hpp"

namespace greenmg {

namespace {

using Idx = std::array<int32_t, 2>;

// Canonical form: promote (level, i, j) while every component is even and a
// coarser level exists. A sample position then has exactly one owner level.
void canonicalize(int k, int& level, Idx& i, Idx& j, int d) {
    auto all_even = [d](const Idx& a) {
        return (a[0] % 2 == 0) && (d == 1 || a[1] % 2 == 0);
    };
    while (level < k && all_even(i) && all_even(j)) {
        i[0] /= 2;
        j[0] /= 2;
        if (d == 2) {
            i[1] /= 2;
            j[1] /= 2;
        }
        ++level;
    }
}

uint64_t key_of(int level, const Idx& i, const Idx& j) {
    // 14 bits per component supports n up to 16385 per axis.
    return (static_cast<uint64_t>(level) << 56) | (static_cast<uint64_t>(i[0]) << 42) |
           (static_cast<uint64_t>(i[1]) << 28) | (static_cast<uint64_t>(j[0]) << 14) |
           static_cast<uint64_t>(j[1]);
}

// Walks every correction term of the multilevel product. Visitor receives
// the term's level, target row i, source j, and the interpolation stencil
// (corner positions with count); shared by enumeration and plan building so
// the stored set and the executed reads cannot diverge.
template <typename EvenFn, typename OddFn>
void visit_corrections(const GridHierarchy& g, int m, EvenFn&& even, OddFn&& odd) {
    if (m <= 0) return;
    const int d = g.dim();
    const int k = g.depth();
    const int r = 2 * m;
    const long r2 = static_cast<long>(r) * r;
    for (int l = 0; l < k; ++l) {
        const int n = g.level(l).n;
        const int ni1 = d == 2 ? n : 1;
        Idx i{0, 0}, j{0, 0};
        for (i[0] = 0; i[0] < n; ++i[0]) {
            for (i[1] = 0; i[1] < ni1; ++i[1]) {
                const bool row_even = (i[0] % 2 == 0) && (d == 1 || i[1] % 2 == 0);
                const int lo0 = std::max(0, i[0] - r), hi0 = std::min(n - 1, i[0] + r);
                for (j[0] = lo0; j[0] <= hi0; ++j[0]) {
                    const long dj0 = j[0] - i[0];
                    if (d == 1) {
                        if (dj0 * dj0 > r2) continue;
                        if (row_even) {
                            if (j[0] % 2 != 0) even(l, i, j);
                        } else {
                            odd(l, i, j);
                        }
                        continue;
                    }
                    const int lo1 = std::max(0, i[1] - r), hi1 = std::min(n - 1, i[1] + r);
                    for (j[1] = lo1; j[1] <= hi1; ++j[1]) {
                        const long dj1 = j[1] - i[1];
                        if (dj0 * dj0 + dj1 * dj1 > r2) continue;
                        if (row_even) {
                            if (j[0] % 2 != 0 || j[1] % 2 != 0) even(l, i, j);
                        } else {
                            odd(l, i, j);
                        }
                    }
                }
            }
        }
    }
}

// Interpolation stencil of a position: per axis the position itself when the
// component is even, its two neighbours when odd. Count is 2^(#odd axes).
int stencil_of(const Idx& p, int d, std::array<Idx, 4>& out) {
    std::array<int32_t, 2> lo{p[0], p[1]}, hi{p[0], p[1]};
    if (p[0] % 2 != 0) {
        lo[0] = p[0] - 1;
        hi[0] = p[0] + 1;
    }
    if (d == 2 && p[1] % 2 != 0) {
        lo[1] = p[1] - 1;
        hi[1] = p[1] + 1;
    }
    int cnt = 0;
    for (int a = 0; a < 2; ++a) {
        int32_t c0 = a == 0 ? lo[0] : hi[0];
        if (a == 1 && hi[0] == lo[0]) break;
        for (int b = 0; b < 2; ++b) {
            int32_t c1 = b == 0 ? lo[1] : hi[1];
            if (b == 1 && hi[1] == lo[1]) break;
            out[cnt++] = Idx{c0, c1};
        }
    }
    return cnt;
}

bool point_less(const KernelPoint& a, const KernelPoint& b) {
    if (a.level != b.level) return a.level < b.level;
    if (a.i != b.i) return a.i < b.i;
    return a.j < b.j;
}

}  // namespace

KernelPointSet enumerate_points(const GridHierarchy& g, int m) {
    if (m < 0) throw ShapeMismatch("correction range m must be >= 0");
    const int d = g.dim();
    const int k = g.depth();
    KernelPointSet set;
    set.d = d;
    set.m = m;

    std::unordered_map<uint64_t, size_t> index;
    auto add = [&](int level, Idx i, Idx j, uint8_t role) {
        canonicalize(k, level, i, j, d);
        uint64_t key = key_of(level, i, j);
        auto [it, fresh] = index.try_emplace(key, set.points.size());
        if (fresh) {
            set.points.push_back({static_cast<int16_t>(level), i, j, role});
        } else {
            set.points[it->second].roles |= role;
        }
    };

    std::array<Idx, 4> corners;
    visit_corrections(
        g, m,
        [&](int l, const Idx& i, const Idx& j) {
            add(l, i, j, kEvenCorrection);
            int cnt = stencil_of(j, d, corners);
            for (int c = 0; c < cnt; ++c) add(l, i, corners[c], kEvenStencil);
        },
        [&](int l, const Idx& i, const Idx& j) {
            add(l, i, j, kOddCorrection);
            int cnt = stencil_of(i, d, corners);
            for (int c = 0; c < cnt; ++c) add(l, corners[c], j, kOddStencil);
        });

    const int nk = g.level(k).n;
    const int nk1 = d == 2 ? nk : 1;
    Idx i{0, 0}, j{0, 0};
    for (i[0] = 0; i[0] < nk; ++i[0])
        for (i[1] = 0; i[1] < nk1; ++i[1])
            for (j[0] = 0; j[0] < nk; ++j[0])
                for (j[1] = 0; j[1] < nk1; ++j[1]) add(k, i, j, kCoarsestFull);

    std::sort(set.points.begin(), set.points.end(), point_less);
    return set;
}

double point_fraction(const KernelPointSet& s, const GridHierarchy& g) {
    const long nodes = g.node_count(0);
    const long total = nodes * nodes;
    return static_cast<double>(static_cast<long>(s.points.size())) / static_cast<double>(total);
}

void write_point_csv(const KernelPointSet& s, std::ostream& out) {
    static const std::pair<uint8_t, const char*> names[] = {
        {kCoarsestFull, "coarsest-full"},   {kEvenCorrection, "even-correction"},
        {kEvenStencil, "even-stencil"},     {kOddCorrection, "odd-correction"},
        {kOddStencil, "odd-stencil"},
    };
    out << (s.d == 1 ? "level,i,j,roles\n" : "level,i0,i1,j0,j1,roles\n");
    for (const auto& p : s.points) {
        out << p.level << ',' << p.i[0] << ',';
        if (s.d == 2) out << p.i[1] << ',';
        out << p.j[0] << ',';
        if (s.d == 2) out << p.j[1] << ',';
        bool first = true;
        for (const auto& [flag, name] : names) {
            if (p.roles & flag) {
                if (!first) out << '|';
                out << name;
                first = false;
            }
        }
        out << '\n';
    }
}

MlmiPlan::MlmiPlan(const GridHierarchy& g, int m)
    : grid_(g), points_(enumerate_points(g, m)) {
    const int d = grid_.dim();
    const int k = grid_.depth();
    even_.resize(k);
    odd_.resize(k);

    std::unordered_map<uint64_t, int32_t> index;
    index.reserve(points_.points.size() * 2);
    for (size_t p = 0; p < points_.points.size(); ++p) {
        const auto& kp = points_.points[p];
        index.emplace(key_of(kp.level, kp.i, kp.j), static_cast<int32_t>(p));
    }
    auto lookup = [&](int level, Idx i, Idx j) {
        canonicalize(k, level, i, j, d);
        return index.at(key_of(level, i, j));
    };
    auto flat = [d](const Idx& a, int n) {
        return d == 1 ? a[0] : a[0] * static_cast<int32_t>(n) + a[1];
    };

    std::array<Idx, 4> corners;
    visit_corrections(
        grid_, m,
        [&](int l, const Idx& i, const Idx& j) {
            Term t;
            Idx coarse_row{i[0] / 2, i[1] / 2};
            t.target = flat(coarse_row, grid_.level(l + 1).n);
            t.source = flat(j, grid_.level(l).n);
            t.direct = lookup(l, i, j);
            t.ncorner = static_cast<uint8_t>(stencil_of(j, d, corners));
            for (int c = 0; c < t.ncorner; ++c) t.corner[c] = lookup(l, i, corners[c]);
            even_[l].push_back(t);
        },
        [&](int l, const Idx& i, const Idx& j) {
            Term t;
            t.target = flat(i, grid_.level(l).n);
            t.source = flat(j, grid_.level(l).n);
            t.direct = lookup(l, i, j);
            t.ncorner = static_cast<uint8_t>(stencil_of(i, d, corners));
            for (int c = 0; c < t.ncorner; ++c) t.corner[c] = lookup(l, corners[c], j);
            odd_[l].push_back(t);
        });

    // Sorted order puts the complete level-k block last, row-major.
    const long nk = grid_.node_count(k);
    coarse_base_ = static_cast<long>(points_.points.size()) - nk * nk;
}

double MlmiPlan::fraction() const { return point_fraction(points_, grid_); }

namespace {

double h_pow(const GridHierarchy& g, int level) {
    double h = g.level(level).h;
    return g.dim() == 1 ? h : h * h;
}

double correction(const MlmiPlan::Term& t, const std::vector<double>& samples) {
    double interp = 0.0;
    for (int c = 0; c < t.ncorner; ++c) interp += samples[t.corner[c]];
    return samples[t.direct] - interp / t.ncorner;
}

}  // namespace

std::vector<double> mlmi_apply(const MlmiPlan& plan, const std::vector<double>& samples,
                               const Field& f) {
    const GridHierarchy& g = plan.grid_;
    const int k = g.depth();
    if (static_cast<long>(samples.size()) != static_cast<long>(plan.points_.points.size())) {
        throw ShapeMismatch("sample vector does not match the plan's point set");
    }
    if (f.level != 0 || static_cast<long>(f.values.size()) != g.node_count(0)) {
        throw ShapeMismatch("forcing must be a level-0 field of the plan's grid");
    }

    std::vector<Field> fs(k + 1);
    fs[0] = f;
    for (int l = 0; l < k; ++l) fs[l + 1] = restrict_field(g, fs[l]);

    const long nk = g.node_count(k);
    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> K(
        samples.data() + plan.coarse_base_, nk, nk);
    Eigen::Map<const Eigen::VectorXd> fk(fs[k].values.data(), nk);
    Field u{k, std::vector<double>(nk)};
    Eigen::Map<Eigen::VectorXd>(u.values.data(), nk) = h_pow(g, k) * (K * fk);

    for (int l = k - 1; l >= 0; --l) {
        const double hd = h_pow(g, l);
        for (const auto& t : plan.even_[l]) {
            u.values[t.target] += hd * correction(t, samples) * fs[l].values[t.source];
        }
        u = interpolate(g, u);
        for (const auto& t : plan.odd_[l]) {
            u.values[t.target] += hd * correction(t, samples) * fs[l].values[t.source];
        }
    }
    return std::move(u.values);
}

std::vector<double> mlmi_adjoint(const MlmiPlan& plan, const Field& f,
                                 const std::vector<double>& cotangent) {
    const GridHierarchy& g = plan.grid_;
    const int d = g.dim();
    const int k = g.depth();
    if (f.level != 0 || static_cast<long>(f.values.size()) != g.node_count(0)) {
        throw ShapeMismatch("forcing must be a level-0 field of the plan's grid");
    }
    if (static_cast<long>(cotangent.size()) != g.node_count(0)) {
        throw ShapeMismatch("cotangent must be a level-0 field of the plan's grid");
    }

    std::vector<Field> fs(k + 1), ws(k + 1);
    fs[0] = f;
    ws[0] = Field{0, cotangent};
    const double adj_scale = d == 1 ? 2.0 : 4.0;  // interpolate^T = 2^d * restrict
    for (int l = 0; l < k; ++l) {
        fs[l + 1] = restrict_field(g, fs[l]);
        ws[l + 1] = restrict_field(g, ws[l]);
        for (double& v : ws[l + 1].values) v *= adj_scale;
    }

    std::vector<double> grad(plan.points_.points.size(), 0.0);
    for (int l = 0; l < k; ++l) {
        const double hd = h_pow(g, l);
        for (const auto& t : plan.odd_[l]) {
            const double c = hd * ws[l].values[t.target] * fs[l].values[t.source];
            grad[t.direct] += c;
            const double cw = c / t.ncorner;
            for (int q = 0; q < t.ncorner; ++q) grad[t.corner[q]] -= cw;
        }
        for (const auto& t : plan.even_[l]) {
            const double c = hd * ws[l + 1].values[t.target] * fs[l].values[t.source];
            grad[t.direct] += c;
            const double cw = c / t.ncorner;
            for (int q = 0; q < t.ncorner; ++q) grad[t.corner[q]] -= cw;
        }
    }

    const long nk = g.node_count(k);
    Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> Gk(
        grad.data() + plan.coarse_base_, nk, nk);
    Eigen::Map<const Eigen::VectorXd> wk(ws[k].values.data(), nk);
    Eigen::Map<const Eigen::VectorXd> fk(fs[k].values.data(), nk);
    Gk.noalias() += h_pow(g, k) * wk * fk.transpose();
    return grad;
}

std::vector<double> dense_apply(const std::vector<double>& kernel, const std::vector<double>& f,
                                double h, int d) {
    const long n = static_cast<long>(f.size());
    if (static_cast<long>(kernel.size()) != n * n) {
        throw ShapeMismatch("kernel matrix must be n^d x n^d for the forcing length");
    }
    const double hd = d == 1 ? h : h * h;
    std::vector<double> u(n);
    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> K(
        kernel.data(), n, n);
    Eigen::Map<const Eigen::VectorXd> fv(f.data(), n);
    Eigen::Map<Eigen::VectorXd>(u.data(), n) = hd * (K * fv);
    return u;
}

}  // namespace greenmg
