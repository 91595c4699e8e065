#include "pipesim/planner.hpp"

#include <algorithm>
#include <iomanip>
#include <sstream>

#include <nlohmann/json.hpp>

namespace pipesim {

using json = nlohmann::json;

std::optional<ConfigScore> search_microbatch(const std::vector<StageProfile>& stages,
                                             const ClusterSpec& cluster, int w, int d,
                                             long long max_batch, PipelinePolicy policy) {
    std::optional<ConfigScore> best;
    for (const auto& [b, _] : stages.at(0).fwd_time) {
        const long long per_accum = static_cast<long long>(w) * d * b;
        const long long g = max_batch / per_accum;
        if (g < 1) continue;  // even one accumulation step exceeds the safe batch size
        for (bool recompute : {false, true}) {
            if (d == 1 && recompute) continue;  // no stash pressure, only extra compute
            ParallelConfig cfg;
            cfg.width = w;
            cfg.depth = d;
            cfg.microbatch_size = b;
            cfg.recompute = recompute;
            cfg.grad_accum = static_cast<int>(g);
            CostInputs inputs{stages, cluster, cfg};
            const double memory = memory_footprint(inputs, policy, recompute);
            if (memory > cluster.memory_capacity) continue;
            const double throughput = d == 1 ? throughput_nopipeline(inputs)
                                             : throughput_pipelined(inputs, recompute);
            const bool better =
                !best || throughput > best->throughput ||
                (throughput == best->throughput && b > best->config.microbatch_size);
            if (better) {
                best = ConfigScore{cfg, throughput, memory, true, ""};
            }
        }
    }
    return best;
}

PlanResult plan(const ModelProfile& model, const ClusterSpec& cluster, long long max_batch,
                PipelinePolicy policy) {
    model.validate();
    cluster.validate();
    if (max_batch < 1) throw Error("max safe batch size must be >= 1");
    const int n = cluster.total_workers;
    const int blocks = static_cast<int>(model.blocks.size());

    PlanResult result;
    std::vector<std::vector<StageProfile>> stages_by_depth(n + 1);
    for (int w = 1; w <= n; ++w) {
        for (int d = 1; d * w <= n; ++d) {
            result.pairs_examined += 1;
            ConfigScore score;
            score.config.width = w;
            score.config.depth = d;
            if (blocks % d != 0) {
                score.reject_reason = "depth does not divide block count";
                result.rejected.push_back(score);
                continue;
            }
            if (stages_by_depth[d].empty()) stages_by_depth[d] = partition_equal(model, d);
            auto found = search_microbatch(stages_by_depth[d], cluster, w, d, max_batch, policy);
            if (!found) {
                score.reject_reason = "no (b, r) fits the memory capacity and batch cap";
                result.rejected.push_back(score);
                continue;
            }
            result.ranked.push_back(*found);
        }
    }
    if (result.ranked.empty()) {
        std::string detail = "no feasible configuration for this cluster:";
        for (const auto& s : result.rejected) {
            detail += "\n  w=" + std::to_string(s.config.width) +
                      " d=" + std::to_string(s.config.depth) + ": " + s.reject_reason;
        }
        throw Error(detail);
    }
    std::stable_sort(result.ranked.begin(), result.ranked.end(),
                     [](const ConfigScore& a, const ConfigScore& b) {
                         if (a.throughput != b.throughput) return a.throughput > b.throughput;
                         if (a.config.depth != b.config.depth)
                             return a.config.depth < b.config.depth;
                         return a.config.width < b.config.width;
                     });
    const ConfigScore& best = result.ranked.front();
    result.best = best.config;
    result.predicted_throughput = best.throughput;
    result.predicted_memory = best.memory_bytes;
    const long long g_cluster =
        max_batch / (static_cast<long long>(n) * best.config.microbatch_size);
    result.grad_accum_for_cluster = static_cast<int>(std::max<long long>(g_cluster, 1));
    return result;
}

ValidationReport validate_plan(const PlanResult& plan, const ModelProfile& model,
                               const ClusterSpec& cluster, int num_batches,
                               PipelinePolicy policy) {
    if (plan.ranked.empty()) throw Error("validate_plan requires a feasible plan");
    ValidationReport report;
    report.predicted_throughput = plan.predicted_throughput;
    report.predicted_memory = plan.predicted_memory;
    const SimReport sim = simulate_policy(policy, model, cluster, plan.best, num_batches);
    report.simulated_throughput = sim.throughput;
    const auto peaks = measure_high_water(sim);
    report.simulated_memory = *std::max_element(peaks.begin(), peaks.end());
    report.throughput_rel_error =
        std::abs(report.predicted_throughput - report.simulated_throughput) /
        report.simulated_throughput;
    report.memory_rel_error = report.simulated_memory == 0.0
                                  ? 0.0
                                  : std::abs(report.predicted_memory - report.simulated_memory) /
                                        report.simulated_memory;
    return report;
}

namespace {

void append_config_row(std::ostringstream& out, const ConfigScore& s) {
    out << std::setw(5) << s.config.width << std::setw(5) << s.config.depth << std::setw(5)
        << s.config.microbatch_size << std::setw(5) << (s.config.recompute ? "yes" : "no")
        << std::setw(5) << s.config.grad_accum;
    if (s.feasible) {
        out << std::setw(16) << std::setprecision(6) << s.throughput << std::setw(14)
            << std::fixed << std::setprecision(3) << s.memory_bytes / 1e9 << std::defaultfloat;
    } else {
        out << "  " << s.reject_reason;
    }
    out << "\n";
}

}  // namespace

std::string plan_to_text(const PlanResult& plan) {
    std::ostringstream out;
    out << "best configuration: w=" << plan.best.width << " d=" << plan.best.depth
        << " b=" << plan.best.microbatch_size << " r=" << (plan.best.recompute ? "yes" : "no")
        << " g=" << plan.best.grad_accum << "\n";
    out << "predicted throughput: " << std::setprecision(6) << plan.predicted_throughput
        << " samples/s\n";
    out << "predicted memory:     " << std::fixed << std::setprecision(3)
        << plan.predicted_memory / 1e9 << " GB per worker\n"
        << std::defaultfloat;
    out << "cluster grad accumulation g_opt: " << plan.grad_accum_for_cluster << "\n";
    out << "\n    w    d    b    r    g      samples/s     memory_gb\n";
    for (const auto& s : plan.ranked) append_config_row(out, s);
    if (!plan.rejected.empty()) {
        out << "\nrejected configurations:\n    w    d    b    r    g\n";
        for (const auto& s : plan.rejected) append_config_row(out, s);
    }
    return out.str();
}

std::string plan_to_json(const PlanResult& plan) {
    json doc;
    auto config_json = [](const ConfigScore& s) {
        return json{{"width", s.config.width},
                    {"depth", s.config.depth},
                    {"microbatch_size", s.config.microbatch_size},
                    {"recompute", s.config.recompute},
                    {"grad_accum", s.config.grad_accum},
                    {"throughput", s.throughput},
                    {"memory_bytes", s.memory_bytes},
                    {"feasible", s.feasible},
                    {"reject_reason", s.reject_reason}};
    };
    doc["best"] = {{"width", plan.best.width},
                   {"depth", plan.best.depth},
                   {"microbatch_size", plan.best.microbatch_size},
                   {"recompute", plan.best.recompute},
                   {"grad_accum", plan.best.grad_accum}};
    doc["predicted_throughput"] = plan.predicted_throughput;
    doc["predicted_memory_bytes"] = plan.predicted_memory;
    doc["grad_accum_for_cluster"] = plan.grad_accum_for_cluster;
    doc["pairs_examined"] = plan.pairs_examined;
    doc["ranked"] = json::array();
    for (const auto& s : plan.ranked) doc["ranked"].push_back(config_json(s));
    doc["rejected"] = json::array();
    for (const auto& s : plan.rejected) doc["rejected"].push_back(config_json(s));
    return doc.dump(2);
}

}  // namespace pipesim
