#pragma once

#include <string>
#include <vector>

#include "pipesim/error.hpp"

namespace pipesim {

enum class PipelinePolicy {
    NoPipelining,
    GPipe,
    PipeDream1F1B,   // weight stashing
    PipeDreamFlush,
    TwoBW,
};

std::string to_string(PipelinePolicy policy);
PipelinePolicy parse_policy(const std::string& name);

enum class OpKind {
    Forward,
    Backward,
    Recompute,
    WeightUpdate,
    FlushBarrier,
    ActivationSend,
    ActivationRecv,
    GradSend,
    GradRecv,
    AllReduce,
};

std::string to_string(OpKind kind);

// Version index meaning "latest available at execution time"; resolved by
// the simulator / semantics interpreter (PipeDream weight stashing).
inline constexpr int kLatestVersion = -1;

struct ScheduledOp {
    OpKind kind = OpKind::Forward;
    int microbatch = 0;       // 1-indexed global id; 0 when absent
    int weight_version = 0;   // for Forward/Backward; kLatestVersion under 1F1B

    bool operator==(const ScheduledOp&) const = default;
};

struct StageProgram {
    int stage = 0;
    std::vector<ScheduledOp> ops;
};

// max(floor((k-1)/m) - 1, 0): the double-buffered weight version used by
// both passes of microbatch k.
int weight_version_2bw(int k, int m);

// Worst-case weight versions a stage must hold under the policy.
int required_versions(PipelinePolicy policy, int d, int m);

std::vector<StageProgram> generate_schedule(PipelinePolicy policy, int d, int m,
                                            int num_batches);

// Line-oriented text form: "stage=<s> op=<kind> mb=<k> ver=<v>".
std::string serialize_programs(const std::vector<StageProgram>& programs);
std::vector<StageProgram> parse_programs(const std::string& text);

}  // namespace pipesim
