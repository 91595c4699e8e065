#pragma once

#include <map>
#include <string>
#include <vector>

#include "pipesim/error.hpp"

namespace pipesim {

// Table keyed on per-GPU microbatch size. Lookups for absent sizes are
// errors, never interpolations.
using BTable = std::map<int, double>;

double table_at(const BTable& table, int b, const std::string& field);

// Per-block measurements. Times in seconds, sizes in bytes.
struct BlockProfile {
    BTable fwd_time;
    BTable bwd_time;
    double weight_bytes = 0.0;
    BTable act_total_bytes;     // all intermediate activations at size b
    BTable act_input_bytes;     // the block's input activation at size b
    BTable act_boundary_bytes;  // input + output activations at size b

    void validate(const std::string& context) const;
    std::vector<int> microbatch_sizes() const;
};

struct ModelProfile {
    std::string name;
    std::vector<BlockProfile> blocks;

    void validate() const;
    std::vector<int> microbatch_sizes() const { return blocks.at(0).microbatch_sizes(); }
    double total_weight_bytes() const;
};

struct ClusterSpec {
    int total_workers = 1;
    int gpus_per_server = 1;
    double bandwidth_high = 0.0;   // bytes/second, intra-server
    double bandwidth_low = 0.0;    // bytes/second, inter-server
    double memory_capacity = 0.0;  // bytes per worker

    void validate() const;
};

// (w, d, b, r, g). Global batch is b*w*d*g by construction.
struct ParallelConfig {
    int width = 1;
    int depth = 1;
    int microbatch_size = 1;
    bool recompute = false;
    int grad_accum = 1;

    int microbatches_per_batch() const { return depth * grad_accum; }
    long long global_batch() const {
        return static_cast<long long>(microbatch_size) * width * depth * grad_accum;
    }
    void validate(const ClusterSpec& cluster) const;
};

// Aggregate of one contiguous run of blocks.
struct StageProfile {
    BTable fwd_time;          // sum over blocks
    BTable bwd_time;          // sum over blocks
    double weight_bytes = 0.0;
    BTable act_total_bytes;   // sum over blocks
    BTable act_input_bytes;   // input activation of the first block
    BTable act_output_bytes;  // output activation of the last block (the
                              // inter-stage boundary tensor)
};

// Splits the model into d equal-block stages. d must divide the block count.
std::vector<StageProfile> partition_equal(const ModelProfile& model, int d);

ModelProfile load_model_profile(const std::string& text);
std::string serialize_model_profile(const ModelProfile& model);
ModelProfile load_model_profile_file(const std::string& path);

ClusterSpec load_cluster_spec(const std::string& text);
std::string serialize_cluster_spec(const ClusterSpec& cluster);
ClusterSpec load_cluster_spec_file(const std::string& path);

// Builds an n-block uniform profile. Times and activation sizes scale
// linearly in the microbatch size; the boundary tensor equals 2x the input
// (uniform blocks have equal input and output activations).
ModelProfile make_uniform_profile(const std::string& name, int num_blocks,
                                  double fwd_seconds_b1, double bwd_seconds_b1,
                                  double weight_bytes, double act_total_bytes_b1,
                                  double act_input_bytes_b1,
                                  const std::vector<int>& microbatch_sizes);

}  // namespace pipesim
