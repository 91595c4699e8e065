#include "pipesim/fixtures.hpp"

namespace pipesim {

ModelProfile fixture_uniform_model(int num_blocks) {
    return make_uniform_profile("uniform" + std::to_string(num_blocks), num_blocks,
                                /*fwd_seconds_b1=*/1e-3, /*bwd_seconds_b1=*/2e-3,
                                /*weight_bytes=*/1e8, /*act_total_bytes_b1=*/1e6,
                                /*act_input_bytes_b1=*/2.5e5, {1, 2, 4});
}

ClusterSpec fixture_cluster(int total_workers, int gpus_per_server) {
    ClusterSpec cluster;
    cluster.total_workers = total_workers;
    cluster.gpus_per_server = gpus_per_server;
    cluster.bandwidth_high = 1e12;
    cluster.bandwidth_low = 1e11;
    cluster.memory_capacity = 32e9;
    return cluster;
}

SimReport fixture_figure2_report(int num_batches) {
    const ModelProfile model = fixture_uniform_model(4);
    const ClusterSpec cluster = fixture_cluster(4, 4);
    ParallelConfig cfg;
    cfg.width = 1;
    cfg.depth = 4;
    cfg.microbatch_size = 1;
    cfg.grad_accum = 1;  // m = d*g = 4
    return simulate_policy(PipelinePolicy::TwoBW, model, cluster, cfg, num_batches);
}

SimReport fixture_gpipe_d2_report(int num_batches) {
    const ModelProfile model = fixture_uniform_model(2);
    const ClusterSpec cluster = fixture_cluster(2, 2);
    ParallelConfig cfg;
    cfg.width = 1;
    cfg.depth = 2;
    cfg.microbatch_size = 1;
    cfg.grad_accum = 2;  // m = 4
    return simulate_policy(PipelinePolicy::GPipe, model, cluster, cfg, num_batches);
}

}  // namespace pipesim
