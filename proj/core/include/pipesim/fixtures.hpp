#pragma once

#include "pipesim/simulator.hpp"

namespace pipesim {

// Shared synthetic inputs used by the tests, docs, and the `fixtures` CLI
// command. Uniform blocks: t_b = 2 t_f, everything linear in b, and
// communication kept tiny relative to compute.
ModelProfile fixture_uniform_model(int num_blocks);

ClusterSpec fixture_cluster(int total_workers, int gpus_per_server);

// The canonical double-buffered trace: d=4, m=4, one microbatch per slot.
SimReport fixture_figure2_report(int num_batches);

// Two-stage flush trace: d=2, m=4 per batch.
SimReport fixture_gpipe_d2_report(int num_batches);

}  // namespace pipesim
