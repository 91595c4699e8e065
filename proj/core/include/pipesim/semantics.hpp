#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "pipesim/schedule.hpp"

namespace pipesim {

// Dense column-major matrix, just enough for the toy trainer.
struct Mat {
    int rows = 0;
    int cols = 0;
    std::vector<double> data;  // rows * cols, column-major

    Mat() = default;
    Mat(int r, int c) : rows(r), cols(c), data(static_cast<size_t>(r) * c, 0.0) {}
    double& at(int r, int c) { return data[static_cast<size_t>(c) * rows + r]; }
    double at(int r, int c) const { return data[static_cast<size_t>(c) * rows + r]; }
};

Mat matmul(const Mat& a, const Mat& b);            // a * b
Mat matmul_tn(const Mat& a, const Mat& b);         // a^T * b
Mat matmul_nt(const Mat& a, const Mat& b);         // a * b^T
void axpy(double alpha, const Mat& x, Mat& y);     // y += alpha * x
double max_rel_diff(const Mat& a, const Mat& b);

// Chain of square linear layers with quadratic loss; gradients are exact
// and every run is reproducible in double precision.
struct ToyModel {
    int dim = 0;
    std::vector<Mat> init_weights;              // one per layer (block)
    std::vector<std::pair<Mat, Mat>> dataset;   // (input, target) microbatches

    int num_layers() const { return static_cast<int>(init_weights.size()); }
    int microbatch_samples() const { return dataset.at(0).first.cols; }

    // Deterministic generator: portable uniform values from a fixed seed;
    // targets come from a hidden linear map so the loss bottoms out at zero.
    static ToyModel make(int dim, int num_layers, int microbatch_size,
                         int num_microbatches, std::uint64_t seed);
};

struct TrainerConfig {
    double learning_rate = 0.0;  // nu
    double momentum = 0.0;       // beta, 0 disables
    int microbatches_per_batch = 1;  // m
    int num_batches = 1;             // T

    void validate() const;
};

using WeightSet = std::vector<Mat>;          // full-model weights, one Mat per layer
using Trajectory = std::vector<WeightSet>;   // W^(0) .. W^(T)

// W^(t+1) = W^(t) - nu * v_t,  v_t = beta*v_{t-1} + (1-beta)*grad_t(W^(t)).
Trajectory reference_vanilla(const ToyModel& model, const TrainerConfig& cfg);

// Delay-1 variant: batch t's gradient is computed at W^(max(t-2,0)), which
// is what the double-buffered version indexing produces; the first batch
// coincides with the vanilla step.
Trajectory reference_2bw(const ToyModel& model, const TrainerConfig& cfg);

struct PipelinedResult {
    Trajectory trajectory;       // assembled per-batch weight versions
    bool version_consistent = false;  // forward/backward versions match per microbatch
    int max_versions_held = 0;        // max concurrently live versions on any stage
};

// Replays generate_schedule's programs against the toy model, keeping the
// weight-version buffers and activation stashes each policy prescribes.
PipelinedResult pipelined_execute(const ToyModel& model, const TrainerConfig& cfg,
                                  PipelinePolicy policy, int depth);

struct LossCurves {
    std::vector<double> vanilla;
    std::vector<double> twobw;
    double tail_max_gap = 0.0;  // max |gap| over the tail half of training
    double loss_scale = 0.0;    // max vanilla loss over the run
};

LossCurves loss_curve_compare(const ToyModel& model, const TrainerConfig& cfg);

}  // namespace pipesim
