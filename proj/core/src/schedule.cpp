#include "pipesim/schedule.hpp"

#include <algorithm>
#include <sstream>

namespace pipesim {

std::string to_string(PipelinePolicy policy) {
    switch (policy) {
        case PipelinePolicy::NoPipelining: return "none";
        case PipelinePolicy::GPipe: return "gpipe";
        case PipelinePolicy::PipeDream1F1B: return "1f1b";
        case PipelinePolicy::PipeDreamFlush: return "flush";
        case PipelinePolicy::TwoBW: return "2bw";
    }
    throw Error("unknown policy");
}

PipelinePolicy parse_policy(const std::string& name) {
    if (name == "none") return PipelinePolicy::NoPipelining;
    if (name == "gpipe") return PipelinePolicy::GPipe;
    if (name == "1f1b") return PipelinePolicy::PipeDream1F1B;
    if (name == "flush") return PipelinePolicy::PipeDreamFlush;
    if (name == "2bw") return PipelinePolicy::TwoBW;
    throw Error("unknown policy '" + name + "' (expected none|gpipe|1f1b|flush|2bw)");
}

std::string to_string(OpKind kind) {
    switch (kind) {
        case OpKind::Forward: return "forward";
        case OpKind::Backward: return "backward";
        case OpKind::Recompute: return "recompute";
        case OpKind::WeightUpdate: return "update";
        case OpKind::FlushBarrier: return "flush";
        case OpKind::ActivationSend: return "act_send";
        case OpKind::ActivationRecv: return "act_recv";
        case OpKind::GradSend: return "grad_send";
        case OpKind::GradRecv: return "grad_recv";
        case OpKind::AllReduce: return "allreduce";
    }
    throw Error("unknown op kind");
}

namespace {

OpKind parse_op_kind(const std::string& name) {
    for (OpKind k : {OpKind::Forward, OpKind::Backward, OpKind::Recompute,
                     OpKind::WeightUpdate, OpKind::FlushBarrier, OpKind::ActivationSend,
                     OpKind::ActivationRecv, OpKind::GradSend, OpKind::GradRecv,
                     OpKind::AllReduce}) {
        if (to_string(k) == name) return k;
    }
    throw Error("unknown op kind '" + name + "'");
}

}  // namespace

int weight_version_2bw(int k, int m) {
    if (k < 1) throw Error("microbatch index must be >= 1");
    if (m < 1) throw Error("microbatches per batch must be >= 1");
    return std::max((k - 1) / m - 1, 0);
}

int required_versions(PipelinePolicy policy, int d, int /*m*/) {
    switch (policy) {
        case PipelinePolicy::NoPipelining:
        case PipelinePolicy::GPipe:
        case PipelinePolicy::PipeDreamFlush:
            return 1;
        case PipelinePolicy::TwoBW:
            return 2;
        case PipelinePolicy::PipeDream1F1B:
            return d;  // worst case, at stage 0
    }
    throw Error("unknown policy");
}

namespace {

void emit_update(std::vector<ScheduledOp>& ops, bool flush_barrier) {
    if (flush_barrier) ops.push_back({OpKind::FlushBarrier, 0, 0});
    ops.push_back({OpKind::AllReduce, 0, 0});
    ops.push_back({OpKind::WeightUpdate, 0, 0});
}

// GPipe and NoPipelining: per batch, run all microbatches (all-forward-all-
// backward for GPipe, strictly alternating for NoPipelining), then update.
std::vector<ScheduledOp> batched_program(PipelinePolicy policy, int m, int num_batches) {
    std::vector<ScheduledOp> ops;
    for (int t = 1; t <= num_batches; ++t) {
        const int base = (t - 1) * m;
        const int version = t - 1;
        if (policy == PipelinePolicy::GPipe) {
            for (int j = 1; j <= m; ++j) ops.push_back({OpKind::Forward, base + j, version});
            for (int j = 1; j <= m; ++j) ops.push_back({OpKind::Backward, base + j, version});
        } else {
            for (int j = 1; j <= m; ++j) {
                ops.push_back({OpKind::Forward, base + j, version});
                ops.push_back({OpKind::Backward, base + j, version});
            }
        }
        emit_update(ops, policy == PipelinePolicy::GPipe);
    }
    return ops;
}

// 1F1B within one batch: warmup of min(d - stage, m) forwards, then
// alternating, then drain, then flush + update.
std::vector<ScheduledOp> flush_program(int stage, int d, int m, int num_batches) {
    std::vector<ScheduledOp> ops;
    const int warmup = std::min(d - stage, m);
    for (int t = 1; t <= num_batches; ++t) {
        const int base = (t - 1) * m;
        const int version = t - 1;
        for (int j = 1; j <= warmup; ++j) ops.push_back({OpKind::Forward, base + j, version});
        for (int j = 1; j <= m; ++j) {
            ops.push_back({OpKind::Backward, base + j, version});
            if (j + warmup <= m) ops.push_back({OpKind::Forward, base + j + warmup, version});
        }
        emit_update(ops, true);
    }
    return ops;
}

// Continuous 1F1B across batches (TwoBW and PipeDream weight stashing).
std::vector<ScheduledOp> continuous_program(PipelinePolicy policy, int stage, int d, int m,
                                            int num_batches) {
    std::vector<ScheduledOp> ops;
    const int total = m * num_batches;
    const int warmup = std::min(d - stage, total);
    auto version_of = [&](int k) {
        return policy == PipelinePolicy::TwoBW ? weight_version_2bw(k, m) : kLatestVersion;
    };
    for (int j = 1; j <= warmup; ++j) ops.push_back({OpKind::Forward, j, version_of(j)});
    for (int k = 1; k <= total; ++k) {
        ops.push_back({OpKind::Backward, k, version_of(k)});
        const bool update = policy == PipelinePolicy::PipeDream1F1B || k % m == 0;
        if (update) emit_update(ops, false);
        if (k + warmup <= total) {
            ops.push_back({OpKind::Forward, k + warmup, version_of(k + warmup)});
        }
    }
    return ops;
}

}  // namespace

std::vector<StageProgram> generate_schedule(PipelinePolicy policy, int d, int m,
                                            int num_batches) {
    if (d < 1) throw Error("depth must be >= 1");
    if (m < 1) throw Error("microbatches per batch must be >= 1");
    if (num_batches < 1) throw Error("num_batches must be >= 1");
    if (policy == PipelinePolicy::TwoBW && m < d) {
        throw Error("2bw requires m >= d (m=" + std::to_string(m) +
                    ", d=" + std::to_string(d) + ")");
    }
    std::vector<StageProgram> programs(d);
    for (int s = 0; s < d; ++s) {
        programs[s].stage = s;
        switch (policy) {
            case PipelinePolicy::GPipe:
            case PipelinePolicy::NoPipelining:
                programs[s].ops = batched_program(policy, m, num_batches);
                break;
            case PipelinePolicy::PipeDreamFlush:
                programs[s].ops = flush_program(s, d, m, num_batches);
                break;
            case PipelinePolicy::TwoBW:
            case PipelinePolicy::PipeDream1F1B:
                programs[s].ops = continuous_program(policy, s, d, m, num_batches);
                break;
        }
    }
    return programs;
}

std::string serialize_programs(const std::vector<StageProgram>& programs) {
    std::ostringstream out;
    for (const auto& program : programs) {
        for (const auto& op : program.ops) {
            out << "stage=" << program.stage << " op=" << to_string(op.kind);
            if (op.kind == OpKind::Forward || op.kind == OpKind::Backward ||
                op.kind == OpKind::Recompute) {
                out << " mb=" << op.microbatch;
                if (op.weight_version == kLatestVersion) {
                    out << " ver=latest";
                } else {
                    out << " ver=" << op.weight_version;
                }
            }
            out << "\n";
        }
    }
    return out.str();
}

std::vector<StageProgram> parse_programs(const std::string& text) {
    std::vector<StageProgram> programs;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::istringstream fields(line);
        std::string field;
        int stage = -1;
        ScheduledOp op;
        bool have_op = false;
        while (fields >> field) {
            const auto eq = field.find('=');
            if (eq == std::string::npos) {
                throw Error("program line " + std::to_string(lineno) + ": bad field '" +
                            field + "'");
            }
            const std::string key = field.substr(0, eq);
            const std::string value = field.substr(eq + 1);
            if (key == "stage") {
                stage = std::stoi(value);
            } else if (key == "op") {
                op.kind = parse_op_kind(value);
                have_op = true;
            } else if (key == "mb") {
                op.microbatch = std::stoi(value);
            } else if (key == "ver") {
                op.weight_version = value == "latest" ? kLatestVersion : std::stoi(value);
            } else {
                throw Error("program line " + std::to_string(lineno) + ": unknown key '" +
                            key + "'");
            }
        }
        if (stage < 0 || !have_op) {
            throw Error("program line " + std::to_string(lineno) + ": missing stage or op");
        }
        if (static_cast<int>(programs.size()) <= stage) {
            programs.resize(stage + 1);
            for (size_t s = 0; s < programs.size(); ++s) programs[s].stage = static_cast<int>(s);
        }
        programs[stage].ops.push_back(op);
    }
    return programs;
}

}  // namespace pipesim
