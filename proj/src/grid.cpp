#include "greenmg/grid.hpp"

#include <string>

#include "greenmg/errors.hpp"

namespace greenmg {

GridHierarchy::GridHierarchy(int n_fine, int d, int k) : d_(d) {
    if (d != 1 && d != 2) {
        throw UnsupportedDimension("grid dimension must be 1 or 2, got " + std::to_string(d));
    }
    int L = 0;
    int p = n_fine - 1;
    if (p < 1) throw NonDyadicGrid("grid needs at least 2 nodes per axis");
    while (p % 2 == 0) {
        p /= 2;
        ++L;
    }
    if (p != 1) {
        throw NonDyadicGrid("n per axis must be 2^L + 1, got " + std::to_string(n_fine));
    }
    if (k < 0 || k > L) {
        throw LevelMismatch("depth k=" + std::to_string(k) + " exceeds L=" + std::to_string(L));
    }
    levels_.reserve(k + 1);
    int n = n_fine;
    double h = 1.0 / (n_fine - 1);
    for (int l = 0; l <= k; ++l) {
        levels_.push_back({n, h});
        n = (n + 1) / 2;
        h *= 2.0;
    }
}

const GridLevel& GridHierarchy::level(int l) const {
    if (l < 0 || l >= static_cast<int>(levels_.size())) {
        throw LevelMismatch("level " + std::to_string(l) + " outside hierarchy");
    }
    return levels_[l];
}

long GridHierarchy::node_count(int l) const {
    long n = level(l).n;
    return d_ == 1 ? n : n * n;
}

namespace {

// Interpolate one axis of length N to 2N-1; other axis (stride) untouched.
// src strides: consecutive along the refined axis.
void interp_axis(const double* src, double* dst, int N, int rows, int src_row_stride,
                 int dst_row_stride) {
    for (int r = 0; r < rows; ++r) {
        const double* s = src + static_cast<long>(r) * src_row_stride;
        double* t = dst + static_cast<long>(r) * dst_row_stride;
        for (int J = 0; J < N; ++J) t[2 * J] = s[J];
        for (int J = 0; J + 1 < N; ++J) t[2 * J + 1] = 0.5 * (s[J] + s[J + 1]);
    }
}

// Adjoint of interp_axis scaled by 1/2 (one axis worth of the 2^{-d} factor).
void restrict_axis(const double* src, double* dst, int n, int rows, int src_row_stride,
                   int dst_row_stride) {
    int N = (n + 1) / 2;
    for (int r = 0; r < rows; ++r) {
        const double* s = src + static_cast<long>(r) * src_row_stride;
        double* t = dst + static_cast<long>(r) * dst_row_stride;
        t[0] = (2.0 * s[0] + s[1]) * 0.25;
        for (int J = 1; J + 1 < N; ++J) {
            t[J] = (s[2 * J - 1] + 2.0 * s[2 * J] + s[2 * J + 1]) * 0.25;
        }
        t[N - 1] = (s[n - 2] + 2.0 * s[n - 1]) * 0.25;
    }
}

// Transpose a rows x cols row-major matrix.
std::vector<double> transposed(const std::vector<double>& a, int rows, int cols) {
    std::vector<double> out(a.size());
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) out[static_cast<long>(c) * rows + r] = a[static_cast<long>(r) * cols + c];
    return out;
}

}  // namespace

Field interpolate(const GridHierarchy& g, const Field& coarse) {
    int lc = coarse.level;
    if (lc < 1 || lc > g.depth()) throw LevelMismatch("interpolate needs a coarse level in [1, k]");
    int N = g.level(lc).n;
    int n = g.level(lc - 1).n;
    if (static_cast<long>(coarse.values.size()) != g.node_count(lc)) {
        throw ShapeMismatch("field size does not match its level");
    }
    Field out{lc - 1, {}};
    if (g.dim() == 1) {
        out.values.resize(n);
        interp_axis(coarse.values.data(), out.values.data(), N, 1, 0, 0);
    } else {
        // axis 1 (contiguous) first, then axis 0 via transposes
        std::vector<double> half(static_cast<long>(N) * n);
        interp_axis(coarse.values.data(), half.data(), N, N, N, n);
        std::vector<double> halft = transposed(half, N, n);
        std::vector<double> fullt(static_cast<long>(n) * n);
        interp_axis(halft.data(), fullt.data(), N, n, N, n);
        out.values = transposed(fullt, n, n);
    }
    return out;
}

Field restrict_field(const GridHierarchy& g, const Field& fine) {
    int lf = fine.level;
    if (lf < 0 || lf >= g.depth()) throw LevelMismatch("restrict needs a fine level in [0, k-1]");
    int n = g.level(lf).n;
    int N = g.level(lf + 1).n;
    if (static_cast<long>(fine.values.size()) != g.node_count(lf)) {
        throw ShapeMismatch("field size does not match its level");
    }
    Field out{lf + 1, {}};
    if (g.dim() == 1) {
        out.values.resize(N);
        restrict_axis(fine.values.data(), out.values.data(), n, 1, 0, 0);
    } else {
        std::vector<double> half(static_cast<long>(n) * N);
        restrict_axis(fine.values.data(), half.data(), n, n, n, N);
        std::vector<double> halft = transposed(half, n, N);
        std::vector<double> outt(static_cast<long>(N) * N);
        restrict_axis(halft.data(), outt.data(), n, N, n, N);
        out.values = transposed(outt, N, N);
    }
    return out;
}

}  // namespace greenmg
