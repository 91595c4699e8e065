#pragma once

#include <string>
#include <vector>

#include "pipesim/costmodel.hpp"
#include "pipesim/profile.hpp"
#include "pipesim/schedule.hpp"

namespace pipesim {

enum class Lane { Compute, Comm };

struct TimelineEntry {
    int worker = 0;
    Lane lane = Lane::Compute;
    ScheduledOp op;
    double start = 0.0;
    double end = 0.0;
};

struct MemorySample {
    double time = 0.0;
    int weight_versions = 0;
    int activation_stashes = 0;
    double bytes_resident = 0.0;
};

struct MemoryTrace {
    std::vector<MemorySample> samples;
    double peak_bytes() const;
    int peak_versions() const;
    int peak_stashes() const;
};

struct SimReport {
    PipelinePolicy policy = PipelinePolicy::TwoBW;
    ParallelConfig config;
    int num_batches = 0;
    std::vector<TimelineEntry> timeline;
    double throughput = 0.0;        // samples/second, all w pipelines
    double bubble_fraction = 0.0;   // idle fraction over the steady window
    double steady_batch_time = 0.0; // seconds per batch, steady state
    std::vector<MemoryTrace> memory;  // one per worker (stage)
};

// Deterministic discrete-event replay of the given stage programs. One
// pipeline of cfg.depth workers is simulated; replicas only contribute
// all-reduce cost and the w factor in throughput.
SimReport simulate(const std::vector<StageProgram>& programs, PipelinePolicy policy,
                   const ModelProfile& model, const ClusterSpec& cluster,
                   const ParallelConfig& cfg, int num_batches);

// Convenience: generate_schedule + simulate.
SimReport simulate_policy(PipelinePolicy policy, const ModelProfile& model,
                          const ClusterSpec& cluster, const ParallelConfig& cfg,
                          int num_batches);

std::vector<double> measure_high_water(const SimReport& report);

std::string report_to_json(const SimReport& report);
SimReport report_from_json(const std::string& text);

}  // namespace pipesim
