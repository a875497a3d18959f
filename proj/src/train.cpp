#include "greenmg/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

#include <Eigen/Dense>

#include "greenmg/errors.hpp"
#include "rng.hpp"

namespace greenmg {

namespace {

using Clock = std::chrono::steady_clock;
using Eigen::Map;
using Eigen::MatrixXd;

// Largest pair batch evaluated (and cached) in one network call; above this
// the dense path switches to a bounded-memory two-pass sweep.
constexpr long kSinglePassPairs = 100000;
constexpr long kEvalChunk = 8192;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

long node_total(int n, int d) { return d == 1 ? n : static_cast<long>(n) * n; }

long effective_rows(double fraction, long total) {
    if (fraction >= 1.0) return total;
    return std::clamp<long>(std::lround(fraction * static_cast<double>(total)), 1, total);
}

void validate_config(const TrainConfig& cfg) {
    if (cfg.epochs < 1) throw InvalidCount("epochs must be at least 1");
    if (!(cfg.sample_fraction > 0.0) || cfg.sample_fraction > 1.0) {
        throw std::invalid_argument("sample fraction must lie in (0, 1]");
    }
    if (!(cfg.decay > 0.0)) throw std::invalid_argument("decay factor must be positive");
    for (std::size_t i = 1; i < cfg.milestones.size(); ++i) {
        if (cfg.milestones[i] <= cfg.milestones[i - 1]) {
            throw std::invalid_argument("milestones must be strictly increasing");
        }
    }
    if (cfg.variant == Variant::GreenMGNet && cfg.m < 0) {
        throw std::invalid_argument("correction range must be nonnegative");
    }
}

// Sample batches for one epoch: ordered full batch, or a seeded shuffle cut
// into batch_size chunks (last chunk may be short).
std::vector<std::vector<int>> epoch_batches(int count, int batch_size, uint64_t seed, int epoch) {
    if (batch_size <= 0 || batch_size >= count) {
        std::vector<int> all(count);
        std::iota(all.begin(), all.end(), 0);
        return {std::move(all)};
    }
    std::vector<int> idx(count);
    std::iota(idx.begin(), idx.end(), 0);
    rng::Rng gen(rng::derive(seed, 3, static_cast<uint64_t>(epoch)));
    for (int i = 0; i + 1 < count; ++i) {
        const int j = i + static_cast<int>(gen.bits() % static_cast<uint64_t>(count - i));
        std::swap(idx[i], idx[j]);
    }
    std::vector<std::vector<int>> batches;
    for (int start = 0; start < count; start += batch_size) {
        const int stop = std::min(count, start + batch_size);
        batches.emplace_back(idx.begin() + start, idx.begin() + stop);
    }
    return batches;
}

}  // namespace

Variant variant_from_name(const std::string& name) {
    if (name == "GL" || name == "gl") return Variant::GL;
    if (name == "GL-aug" || name == "gl-aug") return Variant::GLAug;
    if (name == "GreenMGNet" || name == "greenmgnet") return Variant::GreenMGNet;
    throw std::invalid_argument("unknown variant: " + name);
}

std::string variant_name(Variant v) {
    switch (v) {
        case Variant::GL:
            return "GL";
        case Variant::GLAug:
            return "GL-aug";
        case Variant::GreenMGNet:
            return "GreenMGNet";
    }
    throw std::invalid_argument("unknown variant");
}

int variant_out_width(Variant v) { return v == Variant::GL ? 1 : 2; }

double relative_l2_loss(const std::vector<double>& pred, const std::vector<double>& truth,
                        int count, std::vector<double>* cotangent) {
    if (count < 1) throw InvalidCount("loss needs at least one field");
    if (pred.size() != truth.size() || pred.size() % static_cast<std::size_t>(count) != 0) {
        throw ShapeMismatch("prediction and target batches do not conform");
    }
    const std::size_t len = pred.size() / count;
    if (cotangent != nullptr) cotangent->assign(pred.size(), 0.0);

    double acc = 0.0;
    for (int b = 0; b < count; ++b) {
        const std::size_t base = b * len;
        double dn = 0.0, un = 0.0;
        for (std::size_t i = 0; i < len; ++i) {
            const double diff = pred[base + i] - truth[base + i];
            dn += diff * diff;
            un += truth[base + i] * truth[base + i];
        }
        dn = std::sqrt(dn);
        un = std::sqrt(un);
        if (un < 1e-14) throw DegenerateTarget("target field norm below 1e-14");
        acc += dn / un;
        if (cotangent != nullptr && dn > 0.0) {
            const double scale = 1.0 / (static_cast<double>(count) * dn * un);
            for (std::size_t i = 0; i < len; ++i) {
                (*cotangent)[base + i] = (pred[base + i] - truth[base + i]) * scale;
            }
        }
    }
    return acc / count;
}

double lr_at(int epoch, const TrainConfig& cfg) {
    int hits = 0;
    for (const int ms : cfg.milestones) {
        if (ms <= epoch) ++hits;
    }
    return cfg.lr * std::pow(cfg.decay, hits);
}

std::vector<double> pointset_inputs(const GridHierarchy& g, const KernelPointSet& s) {
    const int d = g.dim();
    std::vector<double> in;
    in.reserve(s.points.size() * 2 * d);
    for (const KernelPoint& p : s.points) {
        const double h = g.level(p.level).h;
        for (int a = 0; a < d; ++a) in.push_back(p.i[a] * h);
        for (int a = 0; a < d; ++a) in.push_back(p.j[a] * h);
    }
    return in;
}

std::vector<double> assemble_pointset(const KernelPointSet& s, const std::vector<double>& net_out,
                                      int out_width) {
    const std::size_t count = s.points.size();
    if (net_out.size() != count * static_cast<std::size_t>(out_width)) {
        throw ShapeMismatch("network output does not cover the point set");
    }
    std::vector<double> samples(count);
    if (out_width == 1) {
        std::copy(net_out.begin(), net_out.end(), samples.begin());
        return samples;
    }
    for (std::size_t e = 0; e < count; ++e) {
        const KernelPoint& p = s.points[e];
        const Subdomain sub = classify_index(p.i.data(), p.j.data(), s.d);
        samples[e] = assemble_piecewise(net_out[2 * e], net_out[2 * e + 1], sub);
    }
    return samples;
}

std::vector<double> route_pointset(const KernelPointSet& s, const std::vector<double>& sample_grad,
                                   int out_width) {
    const std::size_t count = s.points.size();
    if (sample_grad.size() != count) {
        throw ShapeMismatch("sample gradient does not cover the point set");
    }
    std::vector<double> cot(count * static_cast<std::size_t>(out_width));
    if (out_width == 1) {
        std::copy(sample_grad.begin(), sample_grad.end(), cot.begin());
        return cot;
    }
    for (std::size_t e = 0; e < count; ++e) {
        const KernelPoint& p = s.points[e];
        const auto w = assemble_weights(classify_index(p.i.data(), p.j.data(), s.d));
        cot[2 * e] = w[0] * sample_grad[e];
        cot[2 * e + 1] = w[1] * sample_grad[e];
    }
    return cot;
}

namespace {

// Pair coordinates for target node r and source node c (flat row-major node
// indices); writes 2d doubles and returns the subdomain.
inline Subdomain pair_coords(long r, long c, int n, int d, double h, double* out) {
    double x[2], y[2];
    if (d == 1) {
        x[0] = static_cast<double>(r) * h;
        y[0] = static_cast<double>(c) * h;
    } else {
        x[0] = static_cast<double>(r / n) * h;
        x[1] = static_cast<double>(r % n) * h;
        y[0] = static_cast<double>(c / n) * h;
        y[1] = static_cast<double>(c % n) * h;
    }
    for (int a = 0; a < d; ++a) out[a] = x[a];
    for (int a = 0; a < d; ++a) out[d + a] = y[a];
    return classify_point(x, y, d);
}

}  // namespace

std::vector<double> export_learned_kernel(const MlpParams& params, Variant v, int n, int d) {
    const int ow = variant_out_width(v);
    if (params.in_width() != 2 * d || params.out_width() != ow) {
        throw ArchitectureMismatch("network widths do not match the variant and dimension");
    }
    const long total = node_total(n, d);
    const long pairs = total * total;
    const double h = 1.0 / (n - 1);

    std::vector<double> kernel(static_cast<std::size_t>(pairs));
    std::vector<double> inputs;
    std::vector<Subdomain> subs;
    for (long pos = 0; pos < pairs; pos += kEvalChunk) {
        const long cnt = std::min(kEvalChunk, pairs - pos);
        inputs.assign(static_cast<std::size_t>(cnt) * 2 * d, 0.0);
        subs.assign(static_cast<std::size_t>(cnt), Subdomain::D1);
        for (long q = 0; q < cnt; ++q) {
            const long pair = pos + q;
            subs[q] = pair_coords(pair / total, pair % total, n, d, h,
                                  inputs.data() + static_cast<std::size_t>(q) * 2 * d);
        }
        const std::vector<double> out = mlp_forward(params, inputs, static_cast<int>(cnt));
        for (long q = 0; q < cnt; ++q) {
            kernel[pos + q] = ow == 1
                                  ? out[q]
                                  : assemble_piecewise(out[2 * q], out[2 * q + 1], subs[q]);
        }
    }
    return kernel;
}

namespace {

void check_dataset(const TrainConfig& cfg, const Dataset& data) {
    if (data.count < 1) throw InvalidCount("dataset is empty");
    const long total = node_total(data.problem.n, data.problem.d);
    if (data.forcings.size() != static_cast<std::size_t>(total) * data.count ||
        data.solutions.size() != static_cast<std::size_t>(total) * data.count) {
        throw ShapeMismatch("dataset field sizes do not match its grid");
    }
    (void)cfg;
}

struct DensePairs {
    std::vector<double> inputs;              // pair-consecutive coordinates
    std::vector<std::array<double, 2>> wts;  // assembly weights (two-head only)
};

void build_dense_pairs(const std::vector<long>& rows, long total, int n, int d, double h, int ow,
                       DensePairs& dp) {
    const long pairs = static_cast<long>(rows.size()) * total;
    dp.inputs.assign(static_cast<std::size_t>(pairs) * 2 * d, 0.0);
    if (ow == 2) dp.wts.assign(static_cast<std::size_t>(pairs), {1.0, 0.0});
    long p = 0;
    for (const long r : rows) {
        for (long c = 0; c < total; ++c, ++p) {
            const Subdomain sub =
                pair_coords(r, c, n, d, h, dp.inputs.data() + static_cast<std::size_t>(p) * 2 * d);
            if (ow == 2) dp.wts[p] = assemble_weights(sub);
        }
    }
}

TrainResult train_dense(const TrainConfig& cfg, const Dataset& data, MlpParams params) {
    const int n = data.problem.n;
    const int d = data.problem.d;
    const long total = node_total(n, d);
    const double h = 1.0 / (n - 1);
    const double hd = d == 1 ? h : h * h;
    const int ow = params.out_width();
    const long rows_per_step = effective_rows(cfg.sample_fraction, total);
    const bool subsampled = rows_per_step < total;

    Map<const MatrixXd> forcings(data.forcings.data(), total, data.count);
    Map<const MatrixXd> targets(data.solutions.data(), total, data.count);

    std::vector<long> rows(static_cast<std::size_t>(rows_per_step));
    DensePairs dp;
    if (!subsampled) {
        std::iota(rows.begin(), rows.end(), 0L);
        build_dense_pairs(rows, total, n, d, h, ow, dp);
    }

    AdamState adam;
    MlpCache cache;
    std::vector<double> history;
    history.reserve(cfg.epochs);
    std::vector<double> pred, truth, cot, ocot, grad, chunk_in, chunk_cot;
    MatrixXd kernel(rows_per_step, total);

    const auto t0 = Clock::now();
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        if (subsampled) {
            rng::Rng gen(rng::derive(cfg.seed, 4, static_cast<uint64_t>(epoch)));
            const std::vector<int> pick =
                gen.sample_without_replacement(static_cast<int>(total),
                                               static_cast<int>(rows_per_step));
            for (std::size_t i = 0; i < pick.size(); ++i) rows[i] = pick[i];
            build_dense_pairs(rows, total, n, d, h, ow, dp);
        }
        const auto batches = epoch_batches(data.count, cfg.batch_size, cfg.seed, epoch);
        const double lr = lr_at(epoch, cfg);
        const long pairs = rows_per_step * total;
        const bool single_pass = pairs <= kSinglePassPairs;

        double epoch_loss = 0.0;
        for (const auto& batch : batches) {
            const int bsz = static_cast<int>(batch.size());

            // Network evaluation and kernel assembly for this step.
            std::vector<double> outputs;
            if (single_pass) {
                mlp_forward_cached(params, dp.inputs, static_cast<int>(pairs), cache);
                outputs = cache.outputs;
            } else {
                outputs = mlp_forward(params, dp.inputs, static_cast<int>(pairs));
            }
            for (long p = 0; p < pairs; ++p) {
                const double v = ow == 1 ? outputs[p]
                                         : dp.wts[p][0] * outputs[2 * p] +
                                               dp.wts[p][1] * outputs[2 * p + 1];
                kernel(p / total, p % total) = v;
            }

            MatrixXd fb(total, bsz);
            for (int b = 0; b < bsz; ++b) fb.col(b) = forcings.col(batch[b]);
            MatrixXd up = hd * (kernel * fb);  // rows_per_step x bsz

            pred.assign(up.data(), up.data() + static_cast<std::size_t>(rows_per_step) * bsz);
            truth.resize(pred.size());
            for (int b = 0; b < bsz; ++b) {
                for (long r = 0; r < rows_per_step; ++r) {
                    truth[static_cast<std::size_t>(b) * rows_per_step + r] =
                        targets(rows[r], batch[b]);
                }
            }
            const double loss = relative_l2_loss(pred, truth, bsz, &cot);
            if (!std::isfinite(loss)) {
                throw NumericalBlowup("training loss became non-finite at epoch " +
                                      std::to_string(epoch));
            }
            epoch_loss += loss;

            Map<const MatrixXd> w(cot.data(), rows_per_step, bsz);
            MatrixXd dkernel = hd * (w * fb.transpose());  // rows_per_step x total

            if (single_pass) {
                ocot.assign(static_cast<std::size_t>(pairs) * ow, 0.0);
                for (long p = 0; p < pairs; ++p) {
                    const double gv = dkernel(p / total, p % total);
                    if (ow == 1) {
                        ocot[p] = gv;
                    } else {
                        ocot[2 * p] = dp.wts[p][0] * gv;
                        ocot[2 * p + 1] = dp.wts[p][1] * gv;
                    }
                }
                grad = mlp_backward_cached(params, cache, ocot);
            } else {
                // Bounded-memory sweep: re-run the forward in chunks with a
                // cache and accumulate the parameter gradient.
                grad.assign(static_cast<std::size_t>(params.size()), 0.0);
                for (long pos = 0; pos < pairs; pos += kEvalChunk) {
                    const long cnt = std::min(kEvalChunk, pairs - pos);
                    chunk_in.assign(dp.inputs.begin() + static_cast<std::ptrdiff_t>(pos) * 2 * d,
                                    dp.inputs.begin() +
                                        static_cast<std::ptrdiff_t>(pos + cnt) * 2 * d);
                    chunk_cot.assign(static_cast<std::size_t>(cnt) * ow, 0.0);
                    for (long q = 0; q < cnt; ++q) {
                        const long p = pos + q;
                        const double gv = dkernel(p / total, p % total);
                        if (ow == 1) {
                            chunk_cot[q] = gv;
                        } else {
                            chunk_cot[2 * q] = dp.wts[p][0] * gv;
                            chunk_cot[2 * q + 1] = dp.wts[p][1] * gv;
                        }
                    }
                    const std::vector<double> cg =
                        mlp_backward(params, chunk_in, static_cast<int>(cnt), chunk_cot);
                    for (std::size_t i = 0; i < grad.size(); ++i) grad[i] += cg[i];
                }
            }
            adam_step(params.flat(), grad, adam, lr);
        }
        history.push_back(epoch_loss / static_cast<double>(batches.size()));
    }

    TrainResult result{std::move(params), std::move(history), seconds_since(t0),
                       static_cast<double>(rows_per_step) / static_cast<double>(total)};
    return result;
}

TrainResult train_multilevel(const TrainConfig& cfg, const Dataset& data, MlpParams params) {
    const int n = data.problem.n;
    const int d = data.problem.d;
    const long total = node_total(n, d);
    const int ow = params.out_width();

    GridHierarchy g(n, d, cfg.k);
    MlmiPlan plan(g, cfg.m);
    const KernelPointSet& pts = plan.points();
    const std::vector<double> inputs = pointset_inputs(g, pts);
    const int npts = static_cast<int>(pts.points.size());

    Map<const MatrixXd> forcings(data.forcings.data(), total, data.count);
    Map<const MatrixXd> targets(data.solutions.data(), total, data.count);

    AdamState adam;
    MlpCache cache;
    std::vector<double> history;
    history.reserve(cfg.epochs);
    std::vector<double> pred, truth, cot, sgrad;

    const auto t0 = Clock::now();
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        const auto batches = epoch_batches(data.count, cfg.batch_size, cfg.seed, epoch);
        const double lr = lr_at(epoch, cfg);

        double epoch_loss = 0.0;
        for (const auto& batch : batches) {
            const int bsz = static_cast<int>(batch.size());

            mlp_forward_cached(params, inputs, npts, cache);
            const std::vector<double> samples = assemble_pointset(pts, cache.outputs, ow);

            std::vector<Field> fields(batch.size());
            pred.assign(static_cast<std::size_t>(total) * bsz, 0.0);
            truth.resize(pred.size());
            for (int b = 0; b < bsz; ++b) {
                fields[b].level = 0;
                fields[b].values.assign(forcings.col(batch[b]).data(),
                                        forcings.col(batch[b]).data() + total);
                const std::vector<double> u = mlmi_apply(plan, samples, fields[b]);
                std::copy(u.begin(), u.end(),
                          pred.begin() + static_cast<std::ptrdiff_t>(b) * total);
                for (long r = 0; r < total; ++r) {
                    truth[static_cast<std::size_t>(b) * total + r] = targets(r, batch[b]);
                }
            }
            const double loss = relative_l2_loss(pred, truth, bsz, &cot);
            if (!std::isfinite(loss)) {
                throw NumericalBlowup("training loss became non-finite at epoch " +
                                      std::to_string(epoch));
            }
            epoch_loss += loss;

            sgrad.assign(static_cast<std::size_t>(npts), 0.0);
            std::vector<double> wb(static_cast<std::size_t>(total));
            for (int b = 0; b < bsz; ++b) {
                std::copy(cot.begin() + static_cast<std::ptrdiff_t>(b) * total,
                          cot.begin() + static_cast<std::ptrdiff_t>(b + 1) * total, wb.begin());
                const std::vector<double> gb = mlmi_adjoint(plan, fields[b], wb);
                for (int e = 0; e < npts; ++e) sgrad[e] += gb[e];
            }
            const std::vector<double> ocot = route_pointset(pts, sgrad, ow);
            const std::vector<double> grad = mlp_backward_cached(params, cache, ocot);
            adam_step(params.flat(), grad, adam, lr);
        }
        history.push_back(epoch_loss / static_cast<double>(batches.size()));
    }

    TrainResult result{std::move(params), std::move(history), seconds_since(t0),
                       plan.fraction()};
    return result;
}

}  // namespace

TrainResult train_model(const TrainConfig& cfg, const Dataset& data) {
    validate_config(cfg);
    check_dataset(cfg, data);
    Eigen::setNbThreads(cfg.threads > 0 ? cfg.threads : 1);

    MlpParams params(2 * data.problem.d, variant_out_width(cfg.variant), cfg.seed);
    if (cfg.variant == Variant::GreenMGNet) return train_multilevel(cfg, data, std::move(params));
    return train_dense(cfg, data, std::move(params));
}

Metrics compute_metrics(const MlpParams& params, const TrainConfig& cfg, const Dataset& data,
                        std::vector<double>* eu_field) {
    check_dataset(cfg, data);
    const int n = data.problem.n;
    const int d = data.problem.d;
    const long total = node_total(n, d);
    const double h = 1.0 / (n - 1);
    if (params.in_width() != 2 * d || params.out_width() != variant_out_width(cfg.variant)) {
        throw ArchitectureMismatch("checkpoint widths do not match the variant and dataset");
    }
    Eigen::setNbThreads(cfg.threads > 0 ? cfg.threads : 1);

    Metrics mx;
    std::vector<double> pred(static_cast<std::size_t>(total) * data.count);
    std::vector<double> dense_kernel;

    if (cfg.variant == Variant::GreenMGNet) {
        GridHierarchy g(n, d, cfg.k);
        MlmiPlan plan(g, cfg.m);
        mx.point_fraction = plan.fraction();
        const std::vector<double> inputs = pointset_inputs(g, plan.points());
        const std::vector<double> out =
            mlp_forward(params, inputs, static_cast<int>(plan.points().points.size()));
        const std::vector<double> samples = assemble_pointset(plan.points(), out, 2);

        const auto t0 = Clock::now();
        Field f;
        f.level = 0;
        for (int s = 0; s < data.count; ++s) {
            f.values.assign(data.forcings.begin() + static_cast<std::ptrdiff_t>(s) * total,
                            data.forcings.begin() + static_cast<std::ptrdiff_t>(s + 1) * total);
            const std::vector<double> u = mlmi_apply(plan, samples, f);
            std::copy(u.begin(), u.end(), pred.begin() + static_cast<std::ptrdiff_t>(s) * total);
        }
        mx.infer_seconds = seconds_since(t0);
    } else {
        dense_kernel = export_learned_kernel(params, cfg.variant, n, d);
        mx.point_fraction =
            static_cast<double>(effective_rows(cfg.sample_fraction, total)) /
            static_cast<double>(total);

        const auto t0 = Clock::now();
        std::vector<double> f(static_cast<std::size_t>(total));
        for (int s = 0; s < data.count; ++s) {
            std::copy(data.forcings.begin() + static_cast<std::ptrdiff_t>(s) * total,
                      data.forcings.begin() + static_cast<std::ptrdiff_t>(s + 1) * total,
                      f.begin());
            const std::vector<double> u = dense_apply(dense_kernel, f, h, d);
            std::copy(u.begin(), u.end(), pred.begin() + static_cast<std::ptrdiff_t>(s) * total);
        }
        mx.infer_seconds = seconds_since(t0);
    }

    mx.eps_u = relative_l2_loss(pred, data.solutions, data.count);

    if (eu_field != nullptr) {
        eu_field->assign(static_cast<std::size_t>(total), 0.0);
        for (int s = 0; s < data.count; ++s) {
            for (long r = 0; r < total; ++r) {
                const std::size_t idx = static_cast<std::size_t>(s) * total + r;
                (*eu_field)[r] += std::abs(pred[idx] - data.solutions[idx]) / data.count;
            }
        }
    }

    if (!data.exact_kernel.empty()) {
        if (dense_kernel.empty()) {
            dense_kernel = export_learned_kernel(params, cfg.variant, n, d);
        }
        double dn = 0.0, en = 0.0;
        for (std::size_t i = 0; i < dense_kernel.size(); ++i) {
            const double diff = dense_kernel[i] - data.exact_kernel[i];
            dn += diff * diff;
            en += data.exact_kernel[i] * data.exact_kernel[i];
        }
        mx.eps_g = std::sqrt(dn) / std::sqrt(en);
        mx.has_eps_g = true;
    }
    return mx;
}

}  // namespace greenmg
