#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "pipesim/fixtures.hpp"
#include "pipesim/planner.hpp"
#include "pipesim/render.hpp"
#include "pipesim/semantics.hpp"

namespace {

using namespace pipesim;

constexpr int kOk = 0;
constexpr int kAssertionFailed = 1;
constexpr int kUsageError = 2;

void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot open for writing: " + path);
    out << content;
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

struct SimulateArgs {
    std::string model_path, cluster_path, policy = "2bw", out_path;
    int width = 1, depth = 1, microbatch = 1, accum = 1, batches = 10;
    bool recompute = false;
};

int run_simulate(const SimulateArgs& args) {
    const ModelProfile model = load_model_profile(read_file(args.model_path));
    const ClusterSpec cluster = load_cluster_spec(read_file(args.cluster_path));
    const PipelinePolicy policy = parse_policy(args.policy);
    ParallelConfig cfg;
    cfg.width = args.width;
    cfg.depth = args.depth;
    cfg.microbatch_size = args.microbatch;
    cfg.recompute = args.recompute;
    cfg.grad_accum = args.accum;
    cfg.validate(cluster);

    const SimReport report = simulate_policy(policy, model, cluster, cfg, args.batches);
    std::cout << "policy:            " << to_string(policy) << "\n"
              << "throughput:        " << report.throughput << " samples/s\n"
              << "bubble fraction:   " << report.bubble_fraction << "\n"
              << "steady batch time: " << report.steady_batch_time << " s\n";
    for (size_t s = 0; s < report.memory.size(); ++s) {
        const auto& trace = report.memory[s];
        std::cout << "worker " << s << ": peak " << trace.peak_bytes() / 1e9 << " GB, "
                  << trace.peak_versions() << " weight versions, " << trace.peak_stashes()
                  << " activation stashes\n";
    }
    if (!args.out_path.empty()) write_file(args.out_path, report_to_json(report));
    return kOk;
}

struct PlanArgs {
    std::string model_path, cluster_path, out_path;
    long long max_batch = 0;
    bool validate = false;
    int validate_batches = 50;
};

int run_plan(const PlanArgs& args) {
    const ModelProfile model = load_model_profile(read_file(args.model_path));
    const ClusterSpec cluster = load_cluster_spec(read_file(args.cluster_path));
    PlanResult result;
    try {
        result = plan(model, cluster, args.max_batch);
    } catch (const Error& e) {
        std::cerr << "infeasible: " << e.what() << "\n";
        return kAssertionFailed;
    }
    std::cout << plan_to_text(result);
    if (!args.out_path.empty()) write_file(args.out_path, plan_to_json(result));
    if (args.validate) {
        const ValidationReport v = validate_plan(result, model, cluster, args.validate_batches);
        std::cout << "\nvalidation (" << args.validate_batches << " batches):\n"
                  << "  throughput: predicted " << v.predicted_throughput << ", simulated "
                  << v.simulated_throughput << ", rel error " << v.throughput_rel_error << "\n"
                  << "  memory:     predicted " << v.predicted_memory / 1e9 << " GB, simulated "
                  << v.simulated_memory / 1e9 << " GB, rel error " << v.memory_rel_error << "\n";
    }
    return kOk;
}

struct VerifyArgs {
    std::string grid = "small";
    bool inject_wrong_delay = false;  // negative control: must fail
};

int run_verify(const VerifyArgs& args) {
    if (args.grid != "small" && args.grid != "full") {
        throw Error("unknown grid: " + args.grid + " (expected small or full)");
    }
    const bool full = args.grid == "full";
    const std::vector<int> depths = full ? std::vector<int>{1, 2, 4, 8}
                                         : std::vector<int>{1, 2, 4};
    const std::vector<double> betas = full ? std::vector<double>{0.0, 0.9}
                                           : std::vector<double>{0.9};
    const int num_batches = full ? 20 : 8;
    const double tolerance = 1e-10;

    bool all_ok = true;
    auto check = [&](const std::string& name, bool ok, double diff) {
        all_ok = all_ok && ok;
        std::cout << (ok ? "pass" : "FAIL") << "  " << name << "  max rel diff " << diff << "\n";
    };

    for (int d : depths) {
        for (int m : {d, 2 * d}) {
            for (double beta : betas) {
                ToyModel model = ToyModel::make(4, d, 2, m * num_batches, 12345);
                TrainerConfig cfg;
                cfg.learning_rate = 0.05;
                cfg.momentum = beta;
                cfg.microbatches_per_batch = m;
                cfg.num_batches = num_batches;
                const Trajectory vanilla = reference_vanilla(model, cfg);
                const Trajectory delayed = args.inject_wrong_delay ? vanilla
                                                                   : reference_2bw(model, cfg);
                for (PipelinePolicy policy :
                     {PipelinePolicy::GPipe, PipelinePolicy::PipeDreamFlush,
                      PipelinePolicy::TwoBW, PipelinePolicy::PipeDream1F1B}) {
                    const auto result = pipelined_execute(model, cfg, policy, d);
                    const std::string name = to_string(policy) + " d=" + std::to_string(d) +
                                             " m=" + std::to_string(m) +
                                             " beta=" + std::to_string(beta);
                    if (policy == PipelinePolicy::PipeDream1F1B) {
                        const bool ok = result.version_consistent &&
                                        result.max_versions_held <= d;
                        check(name + " (version consistency)", ok, 0.0);
                        continue;
                    }
                    const Trajectory& ref =
                        policy == PipelinePolicy::TwoBW ? delayed : vanilla;
                    double worst = 0.0;
                    for (size_t t = 0; t < ref.size(); ++t) {
                        for (size_t l = 0; l < ref[t].size(); ++l) {
                            worst = std::max(
                                worst, max_rel_diff(ref[t][l], result.trajectory[t][l]));
                        }
                    }
                    check(name, worst < tolerance, worst);
                }
            }
        }
    }
    return all_ok ? kOk : kAssertionFailed;
}

struct RenderArgs {
    std::string report_path, format = "ascii", out_path;
};

int run_render(const RenderArgs& args) {
    const SimReport report = report_from_json(read_file(args.report_path));
    const std::string rendered = render_timeline(report, parse_render_format(args.format));
    if (args.out_path.empty()) {
        std::cout << rendered;
    } else {
        write_file(args.out_path, rendered);
    }
    return kOk;
}

int run_fixtures(const std::string& out_dir) {
    std::filesystem::create_directories(out_dir);
    auto path = [&](const char* name) { return (std::filesystem::path(out_dir) / name).string(); };
    write_file(path("uniform2.model.json"), serialize_model_profile(fixture_uniform_model(2)));
    write_file(path("uniform4.model.json"), serialize_model_profile(fixture_uniform_model(4)));
    write_file(path("uniform8.model.json"), serialize_model_profile(fixture_uniform_model(8)));
    write_file(path("cluster4.json"), serialize_cluster_spec(fixture_cluster(4, 4)));
    write_file(path("cluster8.json"), serialize_cluster_spec(fixture_cluster(8, 8)));
    write_file(path("figure2.report.json"), report_to_json(fixture_figure2_report(3)));
    write_file(path("gpipe_d2.report.json"), report_to_json(fixture_gpipe_d2_report(3)));
    std::cout << "wrote fixtures to " << out_dir << "\n";
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"pipeline-parallel training schedule simulator and planner"};
    app.require_subcommand(1);

    SimulateArgs sim_args;
    auto* sim = app.add_subcommand("simulate", "simulate a schedule on a profiled model");
    sim->add_option("--model", sim_args.model_path, "model profile file")->required();
    sim->add_option("--cluster", sim_args.cluster_path, "cluster spec file")->required();
    sim->add_option("--policy", sim_args.policy, "none|gpipe|1f1b|flush|2bw");
    sim->add_option("--width", sim_args.width, "pipeline width w")->required();
    sim->add_option("--depth", sim_args.depth, "pipeline depth d")->required();
    sim->add_option("--microbatch", sim_args.microbatch, "microbatch size b")->required();
    sim->add_option("--accum", sim_args.accum, "gradient accumulation steps g")->required();
    sim->add_flag("--recompute", sim_args.recompute, "activation recomputation");
    sim->add_option("--batches", sim_args.batches, "batches to simulate");
    sim->add_option("--out", sim_args.out_path, "write the full report here");

    PlanArgs plan_args;
    auto* pl = app.add_subcommand("plan", "search for the best (w, d, b, r) configuration");
    pl->add_option("--model", plan_args.model_path, "model profile file")->required();
    pl->add_option("--cluster", plan_args.cluster_path, "cluster spec file")->required();
    pl->add_option("--max-batch", plan_args.max_batch, "safe global batch size B")->required();
    pl->add_flag("--validate", plan_args.validate, "simulate the chosen configuration");
    pl->add_option("--validate-batches", plan_args.validate_batches, "batches for --validate");
    pl->add_option("--out", plan_args.out_path, "write the plan here");

    VerifyArgs verify_args;
    auto* vf = app.add_subcommand("verify", "run the weight-update equivalence grid");
    vf->add_option("--grid", verify_args.grid, "small|full");
    vf->add_flag("--inject-wrong-delay", verify_args.inject_wrong_delay)->group("");

    RenderArgs render_args;
    auto* rn = app.add_subcommand("render", "render a simulated timeline");
    rn->add_option("--report", render_args.report_path, "report file from simulate")->required();
    rn->add_option("--format", render_args.format, "ascii|svg");
    rn->add_option("--out", render_args.out_path, "output file (stdout when absent)");

    std::string fixtures_dir = "fixtures";
    auto* fx = app.add_subcommand("fixtures", "emit the shared fixture files");
    fx->add_option("--out", fixtures_dir, "output directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kUsageError;
    }

    try {
        if (sim->parsed()) return run_simulate(sim_args);
        if (pl->parsed()) return run_plan(plan_args);
        if (vf->parsed()) return run_verify(verify_args);
        if (rn->parsed()) return run_render(render_args);
        if (fx->parsed()) return run_fixtures(fixtures_dir);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kUsageError;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kUsageError;
    }
    return kUsageError;
}
