#include "pipesim/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include <nlohmann/json.hpp>

namespace pipesim {

using json = nlohmann::json;

double MemoryTrace::peak_bytes() const {
    double peak = 0.0;
    for (const auto& s : samples) peak = std::max(peak, s.bytes_resident);
    return peak;
}

int MemoryTrace::peak_versions() const {
    int peak = 0;
    for (const auto& s : samples) peak = std::max(peak, s.weight_versions);
    return peak;
}

int MemoryTrace::peak_stashes() const {
    int peak = 0;
    for (const auto& s : samples) peak = std::max(peak, s.activation_stashes);
    return peak;
}

namespace {

constexpr double kUnset = -1.0;

enum class MemEventKind {
    StashRelease,
    TransientRelease,
    VersionRelease,
    NewLatest,
    StashAcquire,
    TransientAcquire,
    VersionAcquire,
};

// Releases sort before acquires at equal timestamps so that a back-to-back
// free/alloc pair does not register a spurious peak.
int mem_event_priority(MemEventKind k) {
    switch (k) {
        case MemEventKind::StashRelease:
        case MemEventKind::TransientRelease:
        case MemEventKind::VersionRelease:
            return 0;
        case MemEventKind::NewLatest:
            return 1;
        default:
            return 2;
    }
}

struct MemEvent {
    double time = 0.0;
    MemEventKind kind = MemEventKind::StashAcquire;
    int version = 0;  // for Version* and NewLatest events
};

struct WorkerState {
    size_t ptr = 0;
    double compute_free = 0.0;
    double allreduce_free = 0.0;
    double pending_allreduce_end = 0.0;
    int update_count = 0;
    std::vector<double> update_end;  // 1-indexed via update_end[t-1]
    std::vector<double> fwd_end;     // indexed by microbatch id
    std::vector<double> bwd_end;
    std::vector<int> resolved_version;  // per microbatch, set at Forward
    std::vector<MemEvent> mem_events;
};

MemoryTrace build_memory_trace(const std::vector<MemEvent>& events_in, PipelinePolicy policy,
                               double stage_weight_bytes, double stash_unit_bytes,
                               double transient_bytes) {
    std::vector<MemEvent> events = events_in;
    std::stable_sort(events.begin(), events.end(), [](const MemEvent& a, const MemEvent& b) {
        if (a.time != b.time) return a.time < b.time;
        return mem_event_priority(a.kind) < mem_event_priority(b.kind);
    });

    MemoryTrace trace;
    int stashes = 0;
    int transients = 0;
    int versions = 1;
    bool first_update_seen = false;
    std::map<int, int> refcount;  // 1F1B: versions referenced by in-flight microbatches
    int latest = 0;

    auto emit = [&](double t) {
        MemorySample s;
        s.time = t;
        s.weight_versions = versions;
        s.activation_stashes = stashes;
        s.bytes_resident = versions * stage_weight_bytes + stashes * stash_unit_bytes +
                           transients * transient_bytes;
        trace.samples.push_back(s);
    };

    emit(0.0);
    for (const auto& ev : events) {
        switch (ev.kind) {
            case MemEventKind::StashAcquire: ++stashes; break;
            case MemEventKind::StashRelease: --stashes; break;
            case MemEventKind::TransientAcquire: ++transients; break;
            case MemEventKind::TransientRelease: --transients; break;
            case MemEventKind::VersionAcquire:
                ++refcount[ev.version];
                break;
            case MemEventKind::VersionRelease:
                if (--refcount[ev.version] == 0) refcount.erase(ev.version);
                break;
            case MemEventKind::NewLatest:
                first_update_seen = true;
                latest = ev.version;
                break;
        }
        if (policy == PipelinePolicy::PipeDream1F1B) {
            versions = static_cast<int>(refcount.size()) + (refcount.count(latest) ? 0 : 1);
        } else if (policy == PipelinePolicy::TwoBW) {
            // The new version plus the shadow version still serving in-flight
            // inputs; the version before that is discarded on creation.
            versions = first_update_seen ? 2 : 1;
        } else {
            versions = 1;
        }
        emit(ev.time);
    }
    return trace;
}

}  // namespace

SimReport simulate(const std::vector<StageProgram>& programs, PipelinePolicy policy,
                   const ModelProfile& model, const ClusterSpec& cluster,
                   const ParallelConfig& cfg, int num_batches) {
    cfg.validate(cluster);
    if (num_batches < 3) throw Error("num_batches must be >= 3 (steady-state window)");
    const int d = cfg.depth;
    if (static_cast<int>(programs.size()) != d) {
        throw Error("program count does not match pipeline depth");
    }
    const int b = cfg.microbatch_size;
    const int m = cfg.microbatches_per_batch();
    const auto stages = partition_equal(model, d);

    std::vector<double> fwd_time(d), bwd_time(d), xfer(d, 0.0), ar_time(d), weight(d),
        stash_unit(d), transient_unit(d);
    for (int s = 0; s < d; ++s) {
        fwd_time[s] = table_at(stages[s].fwd_time, b, "fwd_time");
        bwd_time[s] = table_at(stages[s].bwd_time, b, "bwd_time");
        if (s < d - 1) {
            xfer[s] = table_at(stages[s].act_output_bytes, b, "act_output_bytes") /
                      bwdth_depth(d, cfg.width, cluster);
        }
        ar_time[s] = allreduce_seconds(stages[s].weight_bytes, cfg.width, cluster);
        weight[s] = stages[s].weight_bytes;
        const double act_total = table_at(stages[s].act_total_bytes, b, "act_total_bytes");
        const double act_input = table_at(stages[s].act_input_bytes, b, "act_input_bytes");
        stash_unit[s] = cfg.recompute ? act_input : act_total + act_input;
        transient_unit[s] = cfg.recompute ? act_total : 0.0;
    }

    int max_mb = 0;
    for (const auto& p : programs) {
        for (const auto& op : p.ops) max_mb = std::max(max_mb, op.microbatch);
    }

    std::vector<WorkerState> workers(d);
    for (auto& w : workers) {
        w.fwd_end.assign(max_mb + 1, kUnset);
        w.bwd_end.assign(max_mb + 1, kUnset);
        w.resolved_version.assign(max_mb + 1, 0);
    }

    SimReport report;
    report.policy = policy;
    report.config = cfg;
    report.num_batches = num_batches;

    auto add_entry = [&](int worker, Lane lane, ScheduledOp op, double start, double end) {
        report.timeline.push_back({worker, lane, op, start, end});
    };

    size_t total_ops = 0;
    for (const auto& p : programs) total_ops += p.ops.size();
    size_t scheduled = 0;

    while (scheduled < total_ops) {
        bool progress = false;
        for (int s = 0; s < d; ++s) {
            WorkerState& w = workers[s];
            const auto& ops = programs[s].ops;
            while (w.ptr < ops.size()) {
                ScheduledOp op = ops[w.ptr];
                const int k = op.microbatch;
                if (op.kind == OpKind::Forward) {
                    if (s > 0 && workers[s - 1].fwd_end[k] == kUnset) break;
                    int version = op.weight_version;
                    if (version == kLatestVersion) version = w.update_count;
                    if (version > w.update_count) break;  // version not produced yet
                    double start = w.compute_free;
                    if (s > 0) start = std::max(start, workers[s - 1].fwd_end[k] + xfer[s - 1]);
                    if (version >= 1) start = std::max(start, w.update_end[version - 1]);
                    const double end = start + fwd_time[s];
                    op.weight_version = version;
                    add_entry(s, Lane::Compute, op, start, end);
                    w.mem_events.push_back({start, MemEventKind::StashAcquire, 0});
                    if (cfg.recompute) {
                        w.mem_events.push_back({start, MemEventKind::TransientAcquire, 0});
                        w.mem_events.push_back({end, MemEventKind::TransientRelease, 0});
                    }
                    if (policy == PipelinePolicy::PipeDream1F1B) {
                        w.mem_events.push_back({start, MemEventKind::VersionAcquire, version});
                    }
                    w.resolved_version[k] = version;
                    w.fwd_end[k] = end;
                    w.compute_free = end;
                    if (s < d - 1) {
                        add_entry(s, Lane::Comm, {OpKind::ActivationSend, k, version}, end,
                                  end + xfer[s]);
                        add_entry(s + 1, Lane::Comm, {OpKind::ActivationRecv, k, version}, end,
                                  end + xfer[s]);
                    }
                } else if (op.kind == OpKind::Backward) {
                    if (s < d - 1 && workers[s + 1].bwd_end[k] == kUnset) break;
                    if (w.fwd_end[k] == kUnset) {
                        throw Error("backward for microbatch " + std::to_string(k) +
                                    " precedes its forward at stage " + std::to_string(s));
                    }
                    const int version = op.weight_version == kLatestVersion
                                            ? w.resolved_version[k]
                                            : op.weight_version;
                    double start = w.compute_free;
                    if (s < d - 1) start = std::max(start, workers[s + 1].bwd_end[k] + xfer[s]);
                    if (cfg.recompute) {
                        add_entry(s, Lane::Compute, {OpKind::Recompute, k, version}, start,
                                  start + fwd_time[s]);
                        w.mem_events.push_back({start, MemEventKind::TransientAcquire, 0});
                        start += fwd_time[s];
                    }
                    const double end = start + bwd_time[s];
                    op.weight_version = version;
                    add_entry(s, Lane::Compute, op, start, end);
                    w.mem_events.push_back({end, MemEventKind::StashRelease, 0});
                    if (cfg.recompute) {
                        w.mem_events.push_back({end, MemEventKind::TransientRelease, 0});
                    }
                    if (policy == PipelinePolicy::PipeDream1F1B) {
                        w.mem_events.push_back({end, MemEventKind::VersionRelease, version});
                    }
                    w.bwd_end[k] = end;
                    w.compute_free = end;
                    if (s > 0) {
                        add_entry(s, Lane::Comm, {OpKind::GradSend, k, version}, end,
                                  end + xfer[s - 1]);
                        add_entry(s - 1, Lane::Comm, {OpKind::GradRecv, k, version}, end,
                                  end + xfer[s - 1]);
                    }
                } else if (op.kind == OpKind::AllReduce) {
                    const double start = std::max(w.compute_free, w.allreduce_free);
                    const double end = start + ar_time[s];
                    add_entry(s, Lane::Comm, op, start, end);
                    w.allreduce_free = end;
                    w.pending_allreduce_end = end;
                } else if (op.kind == OpKind::WeightUpdate) {
                    const double t = std::max(w.compute_free, w.pending_allreduce_end);
                    add_entry(s, Lane::Compute, op, t, t);
                    w.update_count += 1;
                    w.update_end.push_back(t);
                    w.mem_events.push_back({t, MemEventKind::NewLatest, w.update_count});
                } else if (op.kind == OpKind::FlushBarrier) {
                    add_entry(s, Lane::Compute, op, w.compute_free, w.compute_free);
                } else {
                    throw Error("op kind '" + to_string(op.kind) +
                                "' is not executable in a stage program");
                }
                w.ptr += 1;
                scheduled += 1;
                progress = true;
            }
        }
        if (!progress) throw Error("dependency deadlock: stage programs cannot make progress");
    }

    // Memory traces.
    for (int s = 0; s < d; ++s) {
        report.memory.push_back(build_memory_trace(workers[s].mem_events, policy, weight[s],
                                                   stash_unit[s], transient_unit[s]));
    }

    // Steady-state throughput from batch-boundary updates at the last stage,
    // excluding the first and last batch.
    const int updates_per_batch = policy == PipelinePolicy::PipeDream1F1B ? m : 1;
    auto batch_update_time = [&](const WorkerState& w, int t) {
        const size_t idx = static_cast<size_t>(t) * updates_per_batch - 1;
        if (idx >= w.update_end.size()) throw Error("missing batch updates in program");
        return w.update_end[idx];
    };
    const WorkerState& last = workers[d - 1];
    const double span = batch_update_time(last, num_batches - 1) - batch_update_time(last, 1);
    report.steady_batch_time = span / (num_batches - 2);
    report.throughput = static_cast<double>(cfg.global_batch()) / report.steady_batch_time;

    // Bubble fraction: per-worker idle share inside its own steady window.
    double total_window = 0.0;
    double total_busy = 0.0;
    for (int s = 0; s < d; ++s) {
        const double w0 = batch_update_time(workers[s], 1);
        const double w1 = batch_update_time(workers[s], num_batches - 1);
        total_window += w1 - w0;
        for (const auto& e : report.timeline) {
            if (e.worker != s || e.lane != Lane::Compute) continue;
            if (e.op.kind != OpKind::Forward && e.op.kind != OpKind::Backward &&
                e.op.kind != OpKind::Recompute) {
                continue;
            }
            const double lo = std::max(e.start, w0);
            const double hi = std::min(e.end, w1);
            if (hi > lo) total_busy += hi - lo;
        }
    }
    report.bubble_fraction = total_window > 0.0 ? 1.0 - total_busy / total_window : 0.0;

    // Stable order: per worker by start time, comm after compute at ties.
    std::stable_sort(report.timeline.begin(), report.timeline.end(),
                     [](const TimelineEntry& a, const TimelineEntry& b) {
                         if (a.worker != b.worker) return a.worker < b.worker;
                         if (a.start != b.start) return a.start < b.start;
                         return a.lane < b.lane;
                     });
    return report;
}

SimReport simulate_policy(PipelinePolicy policy, const ModelProfile& model,
                          const ClusterSpec& cluster, const ParallelConfig& cfg,
                          int num_batches) {
    const auto programs =
        generate_schedule(policy, cfg.depth, cfg.microbatches_per_batch(), num_batches);
    return simulate(programs, policy, model, cluster, cfg, num_batches);
}

std::vector<double> measure_high_water(const SimReport& report) {
    std::vector<double> peaks;
    peaks.reserve(report.memory.size());
    for (const auto& trace : report.memory) peaks.push_back(trace.peak_bytes());
    return peaks;
}

std::string report_to_json(const SimReport& report) {
    json doc;
    doc["policy"] = to_string(report.policy);
    doc["config"] = {{"width", report.config.width},
                     {"depth", report.config.depth},
                     {"microbatch_size", report.config.microbatch_size},
                     {"recompute", report.config.recompute},
                     {"grad_accum", report.config.grad_accum}};
    doc["num_batches"] = report.num_batches;
    doc["throughput"] = report.throughput;
    doc["bubble_fraction"] = report.bubble_fraction;
    doc["steady_batch_time"] = report.steady_batch_time;
    doc["timeline"] = json::array();
    for (const auto& e : report.timeline) {
        doc["timeline"].push_back({{"worker", e.worker},
                                   {"lane", e.lane == Lane::Compute ? "compute" : "comm"},
                                   {"op", to_string(e.op.kind)},
                                   {"mb", e.op.microbatch},
                                   {"ver", e.op.weight_version},
                                   {"start", e.start},
                                   {"end", e.end}});
    }
    doc["memory"] = json::array();
    for (const auto& trace : report.memory) {
        json jt = json::array();
        for (const auto& s : trace.samples) {
            jt.push_back({{"time", s.time},
                          {"versions", s.weight_versions},
                          {"stashes", s.activation_stashes},
                          {"bytes", s.bytes_resident}});
        }
        doc["memory"].push_back(std::move(jt));
    }
    return doc.dump(2);
}

SimReport report_from_json(const std::string& text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        throw Error(std::string("malformed report document: ") + e.what());
    }
    SimReport report;
    try {
        report.policy = parse_policy(doc.at("policy").get<std::string>());
        const auto& jc = doc.at("config");
        report.config.width = jc.at("width").get<int>();
        report.config.depth = jc.at("depth").get<int>();
        report.config.microbatch_size = jc.at("microbatch_size").get<int>();
        report.config.recompute = jc.at("recompute").get<bool>();
        report.config.grad_accum = jc.at("grad_accum").get<int>();
        report.num_batches = doc.at("num_batches").get<int>();
        report.throughput = doc.at("throughput").get<double>();
        report.bubble_fraction = doc.at("bubble_fraction").get<double>();
        report.steady_batch_time = doc.at("steady_batch_time").get<double>();
        for (const auto& je : doc.at("timeline")) {
            TimelineEntry e;
            e.worker = je.at("worker").get<int>();
            e.lane = je.at("lane").get<std::string>() == "comm" ? Lane::Comm : Lane::Compute;
            ScheduledOp op;
            op.kind = OpKind::Forward;
            const std::string kind = je.at("op").get<std::string>();
            for (OpKind cand : {OpKind::Forward, OpKind::Backward, OpKind::Recompute,
                                OpKind::WeightUpdate, OpKind::FlushBarrier,
                                OpKind::ActivationSend, OpKind::ActivationRecv,
                                OpKind::GradSend, OpKind::GradRecv, OpKind::AllReduce}) {
                if (to_string(cand) == kind) op.kind = cand;
            }
            op.microbatch = je.at("mb").get<int>();
            op.weight_version = je.at("ver").get<int>();
            e.op = op;
            e.start = je.at("start").get<double>();
            e.end = je.at("end").get<double>();
            report.timeline.push_back(e);
        }
        for (const auto& jt : doc.at("memory")) {
            MemoryTrace trace;
            for (const auto& js : jt) {
                trace.samples.push_back({js.at("time").get<double>(),
                                         js.at("versions").get<int>(),
                                         js.at("stashes").get<int>(),
                                         js.at("bytes").get<double>()});
            }
            report.memory.push_back(std::move(trace));
        }
    } catch (const json::exception& e) {
        throw Error(std::string("malformed report document: ") + e.what());
    }
    return report;
}

}  // namespace pipesim
