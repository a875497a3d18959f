#pragma once

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "greenmg/grid.hpp"
#include "greenmg/mlmi.hpp"
#include "greenmg/nn.hpp"
#include "greenmg/problems.hpp"

namespace greenmg {

/// GL: dense integration, single-output network.
/// GLAug: dense integration, two-head piecewise network.
/// GreenMGNet: two-head network trained through the multilevel fast
/// integration on its reduced point set.
enum class Variant : uint8_t { GL = 0, GLAug = 1, GreenMGNet = 2 };

Variant variant_from_name(const std::string& name);
std::string variant_name(Variant v);
int variant_out_width(Variant v);

struct TrainConfig {
    Variant variant = Variant::GLAug;
    int epochs = 2000;
    double lr = 0.01;
    std::vector<int> milestones = {1000, 3000};
    double decay = 0.1;
    int batch_size = 0;            // 0 = full batch
    double sample_fraction = 1.0;  // GL/GLAug: fraction of target rows per step
    int k = 2;                     // GreenMGNet coarsening levels
    int m = 7;                     // GreenMGNet local correction range
    uint64_t seed = 0;
    int threads = 1;
};

struct Metrics {
    double eps_u = 0.0;
    double eps_g = std::numeric_limits<double>::quiet_NaN();
    bool has_eps_g = false;
    double point_fraction = 1.0;
    double train_seconds = 0.0;
    double infer_seconds = 0.0;
};

/// Mean over the batch of ||pred_b - truth_b|| / ||truth_b|| on count
/// equally sized fields. When `cotangent` is given it receives
/// d(loss)/d(pred), same layout as pred (zero where pred == truth).
/// Throws DegenerateTarget if any ||truth_b|| < 1e-14.
double relative_l2_loss(const std::vector<double>& pred, const std::vector<double>& truth,
                        int count, std::vector<double>* cotangent = nullptr);

/// base * decay^(number of milestones <= epoch).
double lr_at(int epoch, const TrainConfig& cfg);

/// Network inputs (2d doubles per pair, point-consecutive) for every
/// point-set entry, in entry order; coordinates are level-local nodes
/// scaled to [0,1].
std::vector<double> pointset_inputs(const GridHierarchy& g, const KernelPointSet& s);

/// Kernel sample values from raw network outputs at point-set entries
/// (out_width values per entry; two-head outputs go through the subdomain
/// assembly).
std::vector<double> assemble_pointset(const KernelPointSet& s, const std::vector<double>& net_out,
                                      int out_width);

/// Adjoint of assemble_pointset: scatter per-sample cotangents back to
/// network-output cotangents.
std::vector<double> route_pointset(const KernelPointSet& s, const std::vector<double>& sample_grad,
                                   int out_width);

/// Dense kernel matrix (n^d x n^d, row-major over node indices) from the
/// network, evaluated in bounded-size chunks; two-head variants are
/// assembled piecewise.
std::vector<double> export_learned_kernel(const MlpParams& params, Variant v, int n, int d);

struct TrainResult {
    MlpParams params;
    std::vector<double> loss_history;
    double train_seconds = 0.0;
    double point_fraction = 1.0;
};

/// Runs the variant's training loop on the dataset. Deterministic per
/// config; throws NumericalBlowup (with the epoch in the message) if the
/// loss leaves the finite range.
TrainResult train_model(const TrainConfig& cfg, const Dataset& data);

/// Evaluation with the variant's inference operator (dense product for
/// GL/GLAug, multilevel fast apply for GreenMGNet); eps_g is filled against
/// the dataset's exact kernel when present. `eu_field` (optional) receives
/// the nodewise mean absolute solution error.
Metrics compute_metrics(const MlpParams& params, const TrainConfig& cfg, const Dataset& data,
                        std::vector<double>* eu_field = nullptr);

}  // namespace greenmg
