#include <chrono>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "greenmg/errors.hpp"
#include "greenmg/grid.hpp"
#include "greenmg/io.hpp"
#include "greenmg/mlmi.hpp"
#include "greenmg/nn.hpp"
#include "greenmg/problems.hpp"
#include "greenmg/train.hpp"
#include "rng.hpp"

namespace {

using nlohmann::json;

constexpr int kExitUsage = 2;
constexpr int kExitIo = 3;
constexpr int kExitNumerical = 4;
constexpr int kExitArchitecture = 5;

long peak_resident_bytes() {
    std::ifstream status("/proc/self/status");
    std::string line;
    while (std::getline(status, line)) {
        if (line.rfind("VmHWM:", 0) == 0) {
            long kb = 0;
            if (std::sscanf(line.c_str(), "VmHWM: %ld", &kb) == 1) return kb * 1024;
        }
    }
    return -1;
}

json config_to_json(const greenmg::TrainConfig& cfg) {
    json j;
    j["variant"] = greenmg::variant_name(cfg.variant);
    j["epochs"] = cfg.epochs;
    j["lr"] = cfg.lr;
    j["milestones"] = cfg.milestones;
    j["decay"] = cfg.decay;
    j["batch_size"] = cfg.batch_size;
    j["sample_fraction"] = cfg.sample_fraction;
    j["k"] = cfg.k;
    j["m"] = cfg.m;
    j["seed"] = cfg.seed;
    j["threads"] = cfg.threads;
    return j;
}

void config_from_json(const json& j, greenmg::TrainConfig& cfg) {
    if (j.contains("variant")) cfg.variant = greenmg::variant_from_name(j["variant"]);
    if (j.contains("epochs")) cfg.epochs = j["epochs"];
    if (j.contains("lr")) cfg.lr = j["lr"];
    if (j.contains("milestones")) cfg.milestones = j["milestones"].get<std::vector<int>>();
    if (j.contains("decay")) cfg.decay = j["decay"];
    if (j.contains("batch_size")) cfg.batch_size = j["batch_size"];
    if (j.contains("sample_fraction")) cfg.sample_fraction = j["sample_fraction"];
    if (j.contains("k")) cfg.k = j["k"];
    if (j.contains("m")) cfg.m = j["m"];
    if (j.contains("seed")) cfg.seed = j["seed"];
    if (j.contains("threads")) cfg.threads = j["threads"];
}

json metrics_to_json(const greenmg::Metrics& mx) {
    json j;
    j["eps_u"] = mx.eps_u;
    if (mx.has_eps_g) {
        j["eps_g"] = mx.eps_g;
    } else {
        j["eps_g"] = nullptr;
    }
    j["p"] = mx.point_fraction;
    j["train_seconds"] = mx.train_seconds;
    j["infer_seconds"] = mx.infer_seconds;
    return j;
}

std::string file_checksum(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::string line;
    if (!in || !std::getline(in, line)) throw greenmg::IoFailure("cannot read header of " + path);
    const json header = json::parse(line, nullptr, false);
    if (header.is_discarded() || !header.contains("checksum")) {
        throw greenmg::IoFailure("no checksum recorded in " + path);
    }
    return header["checksum"].get<std::string>();
}

struct GenDataArgs {
    std::string problem = "poisson1d";
    int count = 100;
    int n = 129;
    uint64_t seed = 0;
    std::string out;
};

int cmd_gen_data(const GenDataArgs& a) {
    const greenmg::ProblemSpec spec =
        greenmg::make_problem(greenmg::problem_from_name(a.problem), a.n);
    // Validates the grid before any heavy work.
    greenmg::GridHierarchy probe(a.n, spec.d, 0);
    (void)probe;
    const greenmg::Dataset ds = greenmg::generate_dataset(spec, a.count, a.seed);
    greenmg::save_dataset(a.out, ds);

    json summary;
    summary["problem"] = a.problem;
    summary["count"] = a.count;
    summary["n"] = a.n;
    summary["seed"] = a.seed;
    summary["path"] = a.out;
    summary["checksum"] = file_checksum(a.out);
    std::cout << summary.dump() << "\n";
    return 0;
}

struct TrainArgs {
    std::string config_path;
    std::string dataset_path;
    std::string eval_dataset_path;
    std::string out_dir;
    bool export_kernel = false;
    // Flags parse into here; only options the user actually set override the
    // config file (checked via CLI option counts).
    greenmg::TrainConfig flags;
    std::string variant_flag;
    std::string milestones_flag;
};

std::vector<int> parse_milestones(const std::string& text) {
    std::vector<int> out;
    std::string token;
    for (const char c : text + ",") {
        if (c == ',') {
            if (!token.empty()) out.push_back(std::stoi(token));
            token.clear();
        } else {
            token += c;
        }
    }
    return out;
}

int cmd_train(TrainArgs& a, const CLI::App* sub) {
    greenmg::TrainConfig cfg;
    if (!a.config_path.empty()) {
        std::ifstream in(a.config_path);
        if (!in) throw greenmg::IoFailure("cannot open config " + a.config_path);
        json j;
        try {
            in >> j;
        } catch (const json::exception& e) {
            throw greenmg::IoFailure(std::string("bad config JSON: ") + e.what());
        }
        config_from_json(j, cfg);
        if (a.dataset_path.empty() && j.contains("dataset")) a.dataset_path = j["dataset"];
        if (a.eval_dataset_path.empty() && j.contains("eval_dataset")) {
            a.eval_dataset_path = j["eval_dataset"];
        }
    }
    // Flags the user actually set beat the config file.
    if (sub->count("--variant") > 0) cfg.variant = greenmg::variant_from_name(a.variant_flag);
    if (sub->count("--epochs") > 0) cfg.epochs = a.flags.epochs;
    if (sub->count("--lr") > 0) cfg.lr = a.flags.lr;
    if (sub->count("--milestones") > 0) cfg.milestones = parse_milestones(a.milestones_flag);
    if (sub->count("--decay") > 0) cfg.decay = a.flags.decay;
    if (sub->count("--batch-size") > 0) cfg.batch_size = a.flags.batch_size;
    if (sub->count("--sample-fraction") > 0) cfg.sample_fraction = a.flags.sample_fraction;
    if (sub->count("--levels") > 0) cfg.k = a.flags.k;
    if (sub->count("--range") > 0) cfg.m = a.flags.m;
    if (sub->count("--seed") > 0) cfg.seed = a.flags.seed;
    if (sub->count("--threads") > 0) cfg.threads = a.flags.threads;

    if (a.dataset_path.empty()) {
        std::cerr << "train: no dataset given (flag --dataset or config key \"dataset\")\n";
        return kExitUsage;
    }
    const greenmg::Dataset data = greenmg::load_dataset(a.dataset_path);

    greenmg::TrainResult result = greenmg::train_model(cfg, data);

    const greenmg::Dataset* eval_data = &data;
    greenmg::Dataset held_out;
    if (!a.eval_dataset_path.empty()) {
        held_out = greenmg::load_dataset(a.eval_dataset_path);
        eval_data = &held_out;
    }
    greenmg::Metrics mx = greenmg::compute_metrics(result.params, cfg, *eval_data);
    mx.train_seconds = result.train_seconds;
    mx.point_fraction = result.point_fraction;

    greenmg::ensure_directory(a.out_dir);
    json cfg_snapshot = config_to_json(cfg);
    cfg_snapshot["dataset"] = a.dataset_path;
    if (!a.eval_dataset_path.empty()) cfg_snapshot["eval_dataset"] = a.eval_dataset_path;
    cfg_snapshot["problem"] = greenmg::problem_name(data.problem.kind);
    cfg_snapshot["n"] = data.problem.n;
    greenmg::write_text_atomic(a.out_dir + "/config.json", cfg_snapshot.dump(2) + "\n");

    greenmg::save_checkpoint(a.out_dir + "/checkpoint.bin", result.params);

    std::string csv = "epoch,loss,lr\n";
    for (std::size_t e = 0; e < result.loss_history.size(); ++e) {
        csv += std::to_string(e) + "," + std::to_string(result.loss_history[e]) + "," +
               std::to_string(greenmg::lr_at(static_cast<int>(e), cfg)) + "\n";
    }
    greenmg::write_text_atomic(a.out_dir + "/loss_history.csv", csv);

    json mj = metrics_to_json(mx);
    if (!result.loss_history.empty()) mj["final_loss"] = result.loss_history.back();
    greenmg::write_text_atomic(a.out_dir + "/metrics.json", mj.dump(2) + "\n");

    if (a.export_kernel) {
        const std::vector<double> kernel = greenmg::export_learned_kernel(
            result.params, cfg.variant, data.problem.n, data.problem.d);
        json header;
        header["format"] = "greenmg-kernel";
        header["n"] = data.problem.n;
        header["d"] = data.problem.d;
        header["variant"] = greenmg::variant_name(cfg.variant);
        greenmg::write_blob_atomic(a.out_dir + "/kernel.bin", header, kernel.data(),
                                   kernel.size());
    }

    std::cout << mj.dump() << "\n";
    return 0;
}

struct EvalArgs {
    std::string checkpoint_path;
    std::string dataset_path;
    std::string variant = "GL-aug";
    int k = 2;
    int m = 7;
    int threads = 1;
    std::string pointwise_path;
};

int cmd_eval(const EvalArgs& a) {
    const greenmg::MlpParams params = greenmg::load_checkpoint(a.checkpoint_path);
    const greenmg::Dataset data = greenmg::load_dataset(a.dataset_path);

    greenmg::TrainConfig cfg;
    cfg.variant = greenmg::variant_from_name(a.variant);
    cfg.k = a.k;
    cfg.m = a.m;
    cfg.threads = a.threads;

    std::vector<double> eu;
    const greenmg::Metrics mx = greenmg::compute_metrics(
        params, cfg, data, a.pointwise_path.empty() ? nullptr : &eu);

    if (!a.pointwise_path.empty()) {
        std::string csv = "index,e_u\n";
        for (std::size_t i = 0; i < eu.size(); ++i) {
            csv += std::to_string(i) + "," + std::to_string(eu[i]) + "\n";
        }
        greenmg::write_text_atomic(a.pointwise_path, csv);
    }

    std::cout << metrics_to_json(mx).dump() << "\n";
    return 0;
}

struct BenchArgs {
    int n = 513;
    int d = 1;
    int repetitions = 3;
    int threads = 1;
    std::string out;
};

// One synthetic dataset of batch 8 with unit-normal nodal values; targets
// are synthetic too, so timings cover exactly the training arithmetic.
greenmg::Dataset synthetic_dataset(int n, int d) {
    greenmg::Dataset ds;
    ds.problem = greenmg::make_problem(
        d == 1 ? greenmg::ProblemKind::Poisson1d : greenmg::ProblemKind::Poisson2d, n);
    ds.count = 8;
    const long total = d == 1 ? n : static_cast<long>(n) * n;
    ds.forcings.resize(static_cast<std::size_t>(total) * ds.count);
    ds.solutions.resize(ds.forcings.size());
    greenmg::rng::Rng gen(12345);
    for (double& v : ds.forcings) v = gen.normal();
    for (double& v : ds.solutions) v = gen.normal();
    return ds;
}

int cmd_bench(const BenchArgs& a) {
    const greenmg::Dataset ds = synthetic_dataset(a.n, a.d);
    const long total = a.d == 1 ? a.n : static_cast<long>(a.n) * a.n;
    const double h = 1.0 / (a.n - 1);

    std::string csv = "variant,k,m,p,train_ms_per_step,infer_ms_per_apply,peak_resident_bytes\n";
    const auto add_row = [&csv](const std::string& variant, const std::string& k,
                                const std::string& m, double p, double train_ms,
                                double infer_ms) {
        csv += variant + "," + k + "," + m + "," + std::to_string(p) + "," +
               std::to_string(train_ms) + "," + std::to_string(infer_ms) + "," +
               std::to_string(peak_resident_bytes()) + "\n";
    };

    greenmg::TrainConfig cfg;
    cfg.epochs = a.repetitions;
    cfg.lr = 1e-6;
    cfg.milestones = {};
    cfg.seed = 1;
    cfg.threads = a.threads;

    using Clock = std::chrono::steady_clock;
    const auto time_dense_infer = [&](const std::vector<double>& kernel) {
        std::vector<double> f(static_cast<std::size_t>(total));
        const auto t0 = Clock::now();
        int applies = 0;
        for (int r = 0; r < a.repetitions; ++r) {
            for (int s = 0; s < ds.count; ++s) {
                std::copy(ds.forcings.begin() + static_cast<std::ptrdiff_t>(s) * total,
                          ds.forcings.begin() + static_cast<std::ptrdiff_t>(s + 1) * total,
                          f.begin());
                volatile double sink = greenmg::dense_apply(kernel, f, h, a.d)[0];
                (void)sink;
                ++applies;
            }
        }
        return std::chrono::duration<double, std::milli>(Clock::now() - t0).count() / applies;
    };

    // Dense baselines.
    for (const greenmg::Variant v : {greenmg::Variant::GL, greenmg::Variant::GLAug}) {
        cfg.variant = v;
        const greenmg::TrainResult r = greenmg::train_model(cfg, ds);
        const double train_ms = r.train_seconds * 1000.0 / a.repetitions;
        const std::vector<double> kernel =
            greenmg::export_learned_kernel(r.params, v, a.n, a.d);
        add_row(greenmg::variant_name(v), "-", "-", 1.0, train_ms, time_dense_infer(kernel));
    }

    // Multilevel rows over the benchmark (k, m) grid.
    const std::vector<int> ms = a.d == 1 ? std::vector<int>{0, 1, 3, 7, 15, 31}
                                         : std::vector<int>{0, 1, 3, 5};
    cfg.variant = greenmg::Variant::GreenMGNet;
    for (int k = 1; k <= 3; ++k) {
        for (const int m : ms) {
            cfg.k = k;
            cfg.m = m;
            const greenmg::TrainResult r = greenmg::train_model(cfg, ds);
            const double train_ms = r.train_seconds * 1000.0 / a.repetitions;

            greenmg::GridHierarchy g(a.n, a.d, k);
            greenmg::MlmiPlan plan(g, m);
            const std::vector<double> inputs = greenmg::pointset_inputs(g, plan.points());
            const std::vector<double> out = greenmg::mlp_forward(
                r.params, inputs, static_cast<int>(plan.points().points.size()));
            const std::vector<double> samples = greenmg::assemble_pointset(plan.points(), out, 2);

            greenmg::Field f;
            f.level = 0;
            const auto t0 = Clock::now();
            int applies = 0;
            for (int rep = 0; rep < a.repetitions; ++rep) {
                for (int s = 0; s < ds.count; ++s) {
                    f.values.assign(ds.forcings.begin() + static_cast<std::ptrdiff_t>(s) * total,
                                    ds.forcings.begin() +
                                        static_cast<std::ptrdiff_t>(s + 1) * total);
                    volatile double sink = greenmg::mlmi_apply(plan, samples, f)[0];
                    (void)sink;
                    ++applies;
                }
            }
            const double infer_ms =
                std::chrono::duration<double, std::milli>(Clock::now() - t0).count() / applies;
            add_row("GreenMGNet", std::to_string(k), std::to_string(m), plan.fraction(),
                    train_ms, infer_ms);
        }
    }

    if (a.out.empty()) {
        std::cout << csv;
    } else {
        greenmg::write_text_atomic(a.out, csv);
        std::cout << "wrote " << a.out << "\n";
    }
    return 0;
}

struct ExportArgs {
    std::string checkpoint_path;
    std::string variant = "GL-aug";
    int n = 129;
    std::string out;
    std::string points_csv;
    int k = 2;
    int m = 7;
};

int cmd_export_kernel(const ExportArgs& a) {
    const greenmg::MlpParams params = greenmg::load_checkpoint(a.checkpoint_path);
    const greenmg::Variant v = greenmg::variant_from_name(a.variant);
    const int d = params.in_width() / 2;

    const std::vector<double> kernel = greenmg::export_learned_kernel(params, v, a.n, d);
    json header;
    header["format"] = "greenmg-kernel";
    header["n"] = a.n;
    header["d"] = d;
    header["variant"] = greenmg::variant_name(v);
    greenmg::write_blob_atomic(a.out, header, kernel.data(), kernel.size());

    if (!a.points_csv.empty()) {
        greenmg::GridHierarchy g(a.n, d, a.k);
        const greenmg::KernelPointSet pts = greenmg::enumerate_points(g, a.m);
        std::ostringstream csv;
        greenmg::write_point_csv(pts, csv);
        greenmg::write_text_atomic(a.points_csv, csv.str());
    }

    std::cout << "wrote " << a.out << " (" << kernel.size() << " values)\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Learning asymptotically smooth kernels from forcing/solution pairs "
                 "with multilevel fast integration"};
    app.require_subcommand(1);

    GenDataArgs gen;
    CLI::App* gen_cmd = app.add_subcommand("gen-data", "Generate a benchmark dataset");
    gen_cmd->add_option("--problem", gen.problem,
                        "Problem name: log1d|poisson1d|schrodinger1d|airy1d|poisson2d|darcy2d");
    gen_cmd->add_option("--count", gen.count, "Number of forcing/solution pairs");
    gen_cmd->add_option("--n", gen.n, "Grid points per axis (2^L + 1)");
    gen_cmd->add_option("--seed", gen.seed, "Master seed");
    gen_cmd->add_option("--out", gen.out, "Output dataset path")->required();

    TrainArgs tr;
    CLI::App* train_cmd = app.add_subcommand("train", "Train a kernel network");
    train_cmd->add_option("--config", tr.config_path, "JSON config file (flags override it)");
    train_cmd->add_option("--dataset", tr.dataset_path, "Training dataset path");
    train_cmd->add_option("--eval-dataset", tr.eval_dataset_path,
                          "Held-out dataset for the reported metrics");
    train_cmd->add_option("--out", tr.out_dir, "Run directory")->required();
    train_cmd->add_option("--variant", tr.variant_flag, "GL | GL-aug | GreenMGNet");
    train_cmd->add_option("--epochs", tr.flags.epochs, "Training epochs");
    train_cmd->add_option("--lr", tr.flags.lr, "Base learning rate");
    train_cmd->add_option("--milestones", tr.milestones_flag,
                          "Comma-separated epochs where the rate decays");
    train_cmd->add_option("--decay", tr.flags.decay, "Learning-rate decay factor");
    train_cmd->add_option("--batch-size", tr.flags.batch_size, "Batch size (0 = full batch)");
    train_cmd->add_option("--sample-fraction", tr.flags.sample_fraction,
                          "Fraction of target rows per step (dense variants)");
    train_cmd->add_option("-k,--levels", tr.flags.k, "Coarsening levels (GreenMGNet)");
    train_cmd->add_option("-m,--range", tr.flags.m, "Local correction range (GreenMGNet)");
    train_cmd->add_option("--seed", tr.flags.seed, "Training seed");
    train_cmd->add_option("--threads", tr.flags.threads, "Worker threads");
    train_cmd->add_flag("--export-kernel", tr.export_kernel,
                        "Also write the dense learned kernel to the run directory");

    EvalArgs ev;
    CLI::App* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset");
    eval_cmd->add_option("--checkpoint", ev.checkpoint_path, "Checkpoint path")->required();
    eval_cmd->add_option("--dataset", ev.dataset_path, "Dataset path")->required();
    eval_cmd->add_option("--variant", ev.variant, "GL | GL-aug | GreenMGNet");
    eval_cmd->add_option("-k,--levels", ev.k, "Coarsening levels (GreenMGNet)");
    eval_cmd->add_option("-m,--range", ev.m, "Local correction range (GreenMGNet)");
    eval_cmd->add_option("--threads", ev.threads, "Worker threads");
    eval_cmd->add_option("--export-pointwise", ev.pointwise_path,
                         "Write the nodewise mean absolute solution error as CSV");

    BenchArgs be;
    CLI::App* bench_cmd = app.add_subcommand("bench", "Time training steps and kernel applies");
    bench_cmd->add_option("--n", be.n, "Grid points per axis");
    bench_cmd->add_option("--d", be.d, "Dimension (1 or 2)")->check(CLI::Range(1, 2));
    bench_cmd->add_option("--repetitions", be.repetitions, "Timing repetitions")
        ->check(CLI::PositiveNumber);
    bench_cmd->add_option("--threads", be.threads, "Worker threads");
    bench_cmd->add_option("--out", be.out, "CSV output path (default stdout)");

    ExportArgs ex;
    CLI::App* export_cmd =
        app.add_subcommand("export-kernel", "Evaluate a checkpoint's dense kernel to a file");
    export_cmd->add_option("--checkpoint", ex.checkpoint_path, "Checkpoint path")->required();
    export_cmd->add_option("--variant", ex.variant, "GL | GL-aug | GreenMGNet");
    export_cmd->add_option("--n", ex.n, "Grid points per axis");
    export_cmd->add_option("--out", ex.out, "Output kernel file")->required();
    export_cmd->add_option("--points-csv", ex.points_csv,
                           "Also write the reduced point set as CSV");
    export_cmd->add_option("-k,--levels", ex.k, "Levels for the point-set CSV");
    export_cmd->add_option("-m,--range", ex.m, "Correction range for the point-set CSV");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    }

    try {
        if (gen_cmd->parsed()) return cmd_gen_data(gen);
        if (train_cmd->parsed()) return cmd_train(tr, train_cmd);
        if (eval_cmd->parsed()) return cmd_eval(ev);
        if (bench_cmd->parsed()) return cmd_bench(be);
        if (export_cmd->parsed()) return cmd_export_kernel(ex);
    } catch (const greenmg::ArchitectureMismatch& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitArchitecture;
    } catch (const greenmg::IoFailure& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitIo;
    } catch (const std::domain_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitNumerical;
    } catch (const std::runtime_error& e) {
        // Numerical failures (blowup, solver, covariance) land here.
        std::cerr << "error: " << e.what() << "\n";
        return kExitNumerical;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    }
    return 0;
}
