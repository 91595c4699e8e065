#include "pipesim/costmodel.hpp"

#include <algorithm>

namespace pipesim {

double bwdth_width(int w, const ClusterSpec& cluster) {
    if (w < 1) throw Error("width must be >= 1");
    return w <= cluster.gpus_per_server ? cluster.bandwidth_high : cluster.bandwidth_low;
}

double bwdth_depth(int d, int w, const ClusterSpec& cluster) {
    if (d < 1 || w < 1) throw Error("depth and width must be >= 1");
    return static_cast<long long>(w) * d <= cluster.gpus_per_server ? cluster.bandwidth_high
                                                                    : cluster.bandwidth_low;
}

double comm_interstage(double boundary_bytes, const ClusterSpec& cluster, int d, int w) {
    if (d <= 1) return 0.0;
    return 2.0 * boundary_bytes / bwdth_depth(d, w, cluster);
}

double allreduce_seconds(double stage_weight_bytes, int w, const ClusterSpec& cluster) {
    if (w <= 1) return 0.0;
    const double bytes = 2.0 * (w - 1) / w * stage_weight_bytes;
    return bytes / bwdth_width(w, cluster);
}

namespace {

// Inter-stage transfer time charged to stage i: the round trip (activation
// forward, gradient back) across each adjacent boundary.
double comm_into_stage(const CostInputs& in, int i, int b) {
    const int d = in.depth();
    if (d == 1) return 0.0;
    double t = 0.0;
    if (i > 0) {
        t += comm_interstage(table_at(in.stages[i - 1].act_output_bytes, b, "act_output_bytes"),
                             in.cluster, d, in.cfg.width);
    }
    if (i < d - 1) {
        t += comm_interstage(table_at(in.stages[i].act_output_bytes, b, "act_output_bytes"),
                             in.cluster, d, in.cfg.width);
    }
    return t;
}

double stage_compute(const CostInputs& in, int i, int b) {
    return table_at(in.stages[i].fwd_time, b, "fwd_time") +
           table_at(in.stages[i].bwd_time, b, "bwd_time");
}

}  // namespace

double throughput_nopipeline(const CostInputs& in) {
    const int b = in.cfg.microbatch_size;
    const int m = in.cfg.microbatches_per_batch();
    double t = 0.0;
    for (int i = 0; i < in.depth(); ++i) {
        const double ar = allreduce_seconds(in.stages[i].weight_bytes, in.cfg.width, in.cluster);
        t += std::max(stage_compute(in, i, b) + comm_into_stage(in, i, b), ar / m);
    }
    return static_cast<double>(b) * in.cfg.width / t;
}

double throughput_pipelined(const CostInputs& in, bool recompute) {
    const int b = in.cfg.microbatch_size;
    const int m = in.cfg.microbatches_per_batch();
    const double cext = recompute ? in.c_extra : 1.0;
    double t = 0.0;
    for (int i = 0; i < in.depth(); ++i) {
        const double ar = allreduce_seconds(in.stages[i].weight_bytes, in.cfg.width, in.cluster);
        const double stage_t =
            std::max(cext * stage_compute(in, i, b) + comm_into_stage(in, i, b), ar / m);
        t = std::max(t, stage_t);
    }
    return static_cast<double>(b) * in.cfg.width / t;
}

std::vector<double> memory_footprint_per_stage(const CostInputs& in, PipelinePolicy policy,
                                               bool recompute) {
    const int d = in.depth();
    const int b = in.cfg.microbatch_size;
    const int m = in.cfg.microbatches_per_batch();
    std::vector<double> result(d);
    for (int s = 0; s < d; ++s) {
        int versions = required_versions(policy, d, m);
        if (policy == PipelinePolicy::PipeDream1F1B) versions = std::max(d - s, 1);
        int stashes = 0;
        switch (policy) {
            case PipelinePolicy::NoPipelining: stashes = 1; break;
            case PipelinePolicy::GPipe: stashes = m; break;
            default: stashes = std::min(d - s, m); break;
        }
        const double act_total = table_at(in.stages[s].act_total_bytes, b, "act_total_bytes");
        const double act_input = table_at(in.stages[s].act_input_bytes, b, "act_input_bytes");
        const double stash_unit = recompute ? act_input : act_total + act_input;
        const double transient = recompute ? act_total : 0.0;
        result[s] = versions * in.stages[s].weight_bytes + stashes * stash_unit + transient;
    }
    return result;
}

double memory_footprint(const CostInputs& in, PipelinePolicy policy, bool recompute) {
    const auto per_stage = memory_footprint_per_stage(in, policy, recompute);
    return *std::max_element(per_stage.begin(), per_stage.end());
}

int largest_fitting_microbatch(const std::vector<StageProfile>& stages,
                               const ClusterSpec& cluster, const ParallelConfig& shape,
                               PipelinePolicy policy, bool recompute) {
    CostInputs in{stages, cluster, shape};
    int best = 0;
    for (const auto& [b, _] : stages.at(0).fwd_time) {
        in.cfg.microbatch_size = b;
        if (memory_footprint(in, policy, recompute) <= cluster.memory_capacity) best = b;
    }
    return best;
}

}  // namespace pipesim
