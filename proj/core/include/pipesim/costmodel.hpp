#pragma once

#include <vector>

#include "pipesim/profile.hpp"
#include "pipesim/schedule.hpp"

namespace pipesim {

// Bandwidth for cross-replica (all-reduce) traffic. The w replicas of one
// stage fit on a single server when w <= gpus_per_server, so they get the
// intra-server links.
double bwdth_width(int w, const ClusterSpec& cluster);

// Bandwidth for inter-stage traffic. Adjacent stages share a server only
// when the whole pipeline group (w*d workers) fits on one server; replicas
// are placed first to keep all-reduce traffic intra-server.
double bwdth_depth(int d, int w, const ClusterSpec& cluster);

// Round-trip inter-stage cost per microbatch for one stage boundary:
// activations forward plus gradients backward, zero when d == 1.
double comm_interstage(double boundary_bytes, const ClusterSpec& cluster, int d, int w);

// Ring all-reduce: 2*(w-1)/w of the stage's weight bytes over bwdth_width.
double allreduce_seconds(double stage_weight_bytes, int w, const ClusterSpec& cluster);

struct CostInputs {
    std::vector<StageProfile> stages;  // from partition_equal
    ClusterSpec cluster;
    ParallelConfig cfg;
    double c_extra = 4.0 / 3.0;  // recomputation compute multiplier

    int depth() const { return static_cast<int>(stages.size()); }
};

// Samples/second over all w pipelines, per-microbatch serial chain.
double throughput_nopipeline(const CostInputs& inputs);

// Samples/second over all w pipelines, bottleneck-stage steady state.
double throughput_pipelined(const CostInputs& inputs, bool recompute);

// Worst-case bytes per worker for the policy (stage 0 of the pipeline).
double memory_footprint(const CostInputs& inputs, PipelinePolicy policy, bool recompute);

// Per-stage worst-case bytes; stage 0 is the maximum for uniform models.
std::vector<double> memory_footprint_per_stage(const CostInputs& inputs,
                                               PipelinePolicy policy, bool recompute);

// b': the largest profiled microbatch size whose footprint fits in the
// per-worker memory capacity, or 0 when none fits.
int largest_fitting_microbatch(const std::vector<StageProfile>& stages,
                               const ClusterSpec& cluster, const ParallelConfig& shape,
                               PipelinePolicy policy, bool recompute);

}  // namespace pipesim
