#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <vector>

#include "greenmg/grid.hpp"

namespace greenmg {

/// Roles a stored kernel sample plays in the multilevel product. One sample
/// may serve several roles; flags are OR-ed together.
enum PointRole : uint8_t {
    kCoarsestFull = 1,
    kEvenCorrection = 2,
    kEvenStencil = 4,
    kOddCorrection = 8,
    kOddStencil = 16,
};

/// Position of one kernel sample: grid level plus target (i) and source (j)
/// multi-indices at that level. Axis 1 entries are zero in 1D. Entries are
/// canonical: either level == depth or some component of (i, j) is odd, so a
/// physical sample position appears exactly once across levels.
struct KernelPoint {
    int16_t level;
    std::array<int32_t, 2> i;
    std::array<int32_t, 2> j;
    uint8_t roles;
};

/// Deduplicated sample positions for one (hierarchy, m), sorted
/// lexicographically by (level, i, j).
struct KernelPointSet {
    int d = 1;
    int m = 0;
    std::vector<KernelPoint> points;
};

/// Collect every kernel sample the multilevel product reads.
///
/// Correction windows: at each level l < k, row i is corrected over source
/// indices j with ||j - i||_2 <= 2m (the radius is m in coarse-grid units),
/// truncated at the boundary. m = 0 disables corrections entirely. Rows with
/// all components even contribute only source points with an odd component
/// (terms at even sources vanish by injection) plus the even interpolation
/// stencil corners; rows with an odd component contribute the whole window
/// plus their even target-stencil rows. Level k is stored in full.
KernelPointSet enumerate_points(const GridHierarchy& g, int m);

/// |S| / (n_fine^d)^2, computed in exact integer arithmetic before the final
/// division.
double point_fraction(const KernelPointSet& s, const GridHierarchy& g);

/// CSV rows "level,i,j,roles" (1D) or "level,i0,i1,j0,j1,roles" (2D); roles
/// are '|'-joined names in declaration order.
void write_point_csv(const KernelPointSet& s, std::ostream& out);

/// Execution schedule binding point-set entries to correction terms so the
/// product runs without hashing. Built once per (hierarchy, m), reused across
/// applications.
class MlmiPlan {
  public:
    MlmiPlan(const GridHierarchy& g, int m);

    const GridHierarchy& grid() const { return grid_; }
    const KernelPointSet& points() const { return points_; }
    int m() const { return points_.m; }
    double fraction() const;

    struct Term {
        int32_t target;      // accumulation index: coarse row (even) or fine row (odd)
        int32_t source;      // flat source index at the term's level
        int32_t direct;      // sample index of G_{i,j}
        std::array<int32_t, 4> corner;
        uint8_t ncorner;     // interpolation stencil size, weight 1/ncorner each
    };

    const std::vector<Term>& even_terms(int level) const { return even_[level]; }
    const std::vector<Term>& odd_terms(int level) const { return odd_[level]; }
    long coarse_base() const { return coarse_base_; }

  private:
    GridHierarchy grid_;
    KernelPointSet points_;
    std::vector<std::vector<Term>> even_, odd_;
    long coarse_base_ = 0;

    friend std::vector<double> mlmi_apply(const MlmiPlan&, const std::vector<double>&,
                                          const Field&);
    friend std::vector<double> mlmi_adjoint(const MlmiPlan&, const Field&,
                                            const std::vector<double>&);
};

/// u_i = h^d sum_j G_{ij} f_j evaluated through the multilevel decomposition:
/// restrict f to the coarsest level, run the dense product there, then per
/// level add the even-row window corrections, interpolate, and add the
/// odd-row window corrections. samples align with plan.points().points.
/// Exact (to roundoff) whenever the sampled kernel is affine in (x, y).
std::vector<double> mlmi_apply(const MlmiPlan& plan, const std::vector<double>& samples,
                               const Field& f);

/// Transpose of the linear map samples -> mlmi_apply(plan, samples, f) for
/// fixed f: returns g with <mlmi_apply(s, f), w> = <s, g> for all s.
std::vector<double> mlmi_adjoint(const MlmiPlan& plan, const Field& f,
                                 const std::vector<double>& cotangent);

/// Reference product u = h^d K f with the full kernel matrix, row-major
/// (n^d x n^d).
std::vector<double> dense_apply(const std::vector<double>& kernel, const std::vector<double>& f,
                                double h, int d);

}  // namespace greenmg
