#pragma once

#include <optional>
#include <string>
#include <vector>

#include "pipesim/costmodel.hpp"
#include "pipesim/profile.hpp"
#include "pipesim/simulator.hpp"

namespace pipesim {

struct ConfigScore {
    ParallelConfig config;
    double throughput = 0.0;      // predicted samples/second
    double memory_bytes = 0.0;    // predicted worst-case bytes per worker
    bool feasible = false;
    std::string reject_reason;    // set when infeasible
};

struct PlanResult {
    ParallelConfig best;
    double predicted_throughput = 0.0;
    double predicted_memory = 0.0;
    int grad_accum_for_cluster = 0;  // g_opt = floor(B / (N * b_opt)), clamped to the cap
    std::vector<ConfigScore> ranked;  // feasible configs, best first
    std::vector<ConfigScore> rejected;
    int pairs_examined = 0;  // number of (w, d) pairs visited
};

// Per-(w, d) inner search: best (b, r) over the profiled microbatch sizes,
// subject to the memory capacity and the safe global batch size B.
std::optional<ConfigScore> search_microbatch(const std::vector<StageProfile>& stages,
                                             const ClusterSpec& cluster, int w, int d,
                                             long long max_batch,
                                             PipelinePolicy policy = PipelinePolicy::TwoBW);

// Exhaustive sweep over all (w, d) with w*d <= N and d dividing the block
// count; argmax throughput, ties broken toward smaller d then smaller w.
PlanResult plan(const ModelProfile& model, const ClusterSpec& cluster, long long max_batch,
                PipelinePolicy policy = PipelinePolicy::TwoBW);

struct ValidationReport {
    double predicted_throughput = 0.0;
    double simulated_throughput = 0.0;
    double throughput_rel_error = 0.0;
    double predicted_memory = 0.0;
    double simulated_memory = 0.0;
    double memory_rel_error = 0.0;
};

ValidationReport validate_plan(const PlanResult& plan, const ModelProfile& model,
                               const ClusterSpec& cluster, int num_batches,
                               PipelinePolicy policy = PipelinePolicy::TwoBW);

std::string plan_to_text(const PlanResult& plan);
std::string plan_to_json(const PlanResult& plan);

}  // namespace pipesim
