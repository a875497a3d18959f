#pragma once

#include <vector>

namespace greenmg {

/// One level of a dyadic grid on [0,1]^d: n nodes per axis at spacing h,
/// endpoints included, node coordinate t_i = i * h.
struct GridLevel {
    int n;
    double h;
};

/// Nested grid hierarchy. Level 0 is the finest with n_fine = 2^L + 1 nodes
/// per axis; each coarser level keeps every second node per axis, so
/// n_{l+1} = (n_l + 1) / 2 and h_{l+1} = 2 h_l. Coarse node I coincides with
/// fine node 2I.
class GridHierarchy {
  public:
    /// Throws NonDyadicGrid unless n_fine = 2^L + 1, UnsupportedDimension
    /// unless d is 1 or 2, LevelMismatch unless 0 <= k <= L.
    GridHierarchy(int n_fine, int d, int k);

    int dim() const { return d_; }
    /// Number of coarsening steps; levels run 0..depth().
    int depth() const { return static_cast<int>(levels_.size()) - 1; }
    const GridLevel& level(int l) const;
    /// Total nodes at level l: n^d.
    long node_count(int l) const;

  private:
    std::vector<GridLevel> levels_;
    int d_;
};

/// Nodal values on one level, row-major over the d axes.
struct Field {
    int level = 0;
    std::vector<double> values;
};

/// Linear (d=1) or bilinear (d=2) interpolation from level l+1 to level l:
/// coarse values are injected at coinciding nodes, in-between nodes take the
/// midpoint average along each refined axis.
Field interpolate(const GridHierarchy& g, const Field& coarse);

/// Full-weighting restriction from level l to level l+1, defined as
/// 2^{-d} times the transpose of interpolation. Interior 1D stencil
/// (f_{2J-1} + 2 f_{2J} + f_{2J+1}) / 4; at the ends the one-sided stencil
/// (2 f_0 + f_1) / 4 keeps the transpose relation exact.
Field restrict_field(const GridHierarchy& g, const Field& fine);

}  // namespace greenmg
