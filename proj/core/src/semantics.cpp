#include "pipesim/semantics.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace pipesim {

Mat matmul(const Mat& a, const Mat& b) {
    if (a.cols != b.rows) throw Error("matmul: shape mismatch");
    Mat c(a.rows, b.cols);
    for (int j = 0; j < b.cols; ++j) {
        for (int k = 0; k < a.cols; ++k) {
            const double bkj = b.at(k, j);
            for (int i = 0; i < a.rows; ++i) c.at(i, j) += a.at(i, k) * bkj;
        }
    }
    return c;
}

Mat matmul_tn(const Mat& a, const Mat& b) {
    if (a.rows != b.rows) throw Error("matmul_tn: shape mismatch");
    Mat c(a.cols, b.cols);
    for (int j = 0; j < b.cols; ++j) {
        for (int i = 0; i < a.cols; ++i) {
            double sum = 0.0;
            for (int k = 0; k < a.rows; ++k) sum += a.at(k, i) * b.at(k, j);
            c.at(i, j) = sum;
        }
    }
    return c;
}

Mat matmul_nt(const Mat& a, const Mat& b) {
    if (a.cols != b.cols) throw Error("matmul_nt: shape mismatch");
    Mat c(a.rows, b.rows);
    for (int j = 0; j < b.rows; ++j) {
        for (int k = 0; k < a.cols; ++k) {
            const double bjk = b.at(j, k);
            for (int i = 0; i < a.rows; ++i) c.at(i, j) += a.at(i, k) * bjk;
        }
    }
    return c;
}

void axpy(double alpha, const Mat& x, Mat& y) {
    if (x.rows != y.rows || x.cols != y.cols) throw Error("axpy: shape mismatch");
    for (size_t i = 0; i < x.data.size(); ++i) y.data[i] += alpha * x.data[i];
}

double max_rel_diff(const Mat& a, const Mat& b) {
    if (a.rows != b.rows || a.cols != b.cols) throw Error("max_rel_diff: shape mismatch");
    double worst = 0.0;
    for (size_t i = 0; i < a.data.size(); ++i) {
        const double denom = std::max({std::abs(a.data[i]), std::abs(b.data[i]), 1e-12});
        worst = std::max(worst, std::abs(a.data[i] - b.data[i]) / denom);
    }
    return worst;
}

namespace {

// splitmix64: portable across platforms, unlike std distributions.
struct Rng {
    std::uint64_t state;
    explicit Rng(std::uint64_t seed) : state(seed) {}
    std::uint64_t next_u64() {
        std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }
    // uniform in [-0.5, 0.5)
    double next() { return (next_u64() >> 11) * (1.0 / 9007199254740992.0) - 0.5; }
};

Mat random_mat(int rows, int cols, Rng& rng) {
    Mat m(rows, cols);
    for (auto& v : m.data) v = rng.next();
    return m;
}

}  // namespace

ToyModel ToyModel::make(int dim, int num_layers, int microbatch_size, int num_microbatches,
                        std::uint64_t seed) {
    if (dim < 1 || num_layers < 1 || microbatch_size < 1 || num_microbatches < 1) {
        throw Error("toy model dimensions must be >= 1");
    }
    Rng rng(seed);
    ToyModel model;
    model.dim = dim;
    for (int l = 0; l < num_layers; ++l) {
        Mat w = random_mat(dim, dim, rng);
        for (auto& v : w.data) v *= 0.2;
        for (int i = 0; i < dim; ++i) w.at(i, i) += 1.0;
        model.init_weights.push_back(std::move(w));
    }
    // Hidden target map keeps the optimum at finite weights.
    Mat target_map = random_mat(dim, dim, rng);
    for (auto& v : target_map.data) v *= 0.3;
    for (int i = 0; i < dim; ++i) target_map.at(i, i) += 1.0;
    for (int k = 0; k < num_microbatches; ++k) {
        Mat x = random_mat(dim, microbatch_size, rng);
        Mat y = matmul(target_map, x);
        model.dataset.emplace_back(std::move(x), std::move(y));
    }
    return model;
}

void TrainerConfig::validate() const {
    if (learning_rate < 0) throw Error("learning rate must be >= 0");
    if (momentum < 0 || momentum >= 1) throw Error("momentum must be in [0, 1)");
    if (microbatches_per_batch < 1) throw Error("m must be >= 1");
    if (num_batches < 1) throw Error("num_batches must be >= 1");
}

namespace {

// Gradient of the mean microbatch loss for batch t (1-indexed) at the given
// weights. Loss per microbatch is ||out - y||^2 / (2b).
WeightSet batch_gradient(const ToyModel& model, const WeightSet& weights, int t, int m,
                         double* loss_out) {
    const int layers = static_cast<int>(weights.size());
    WeightSet grad;
    for (const auto& w : weights) grad.emplace_back(w.rows, w.cols);
    double loss = 0.0;
    const int b = model.microbatch_samples();
    for (int j = 0; j < m; ++j) {
        const int k = (t - 1) * m + j;  // 0-based dataset index
        const auto& [x, y] = model.dataset.at(k);
        std::vector<Mat> inputs;
        Mat cur = x;
        for (int l = 0; l < layers; ++l) {
            inputs.push_back(cur);
            cur = matmul(weights[l], cur);
        }
        Mat g(cur.rows, cur.cols);
        for (size_t i = 0; i < g.data.size(); ++i) {
            const double diff = cur.data[i] - y.data[i];
            g.data[i] = diff / b;
            loss += diff * diff / (2.0 * b);
        }
        for (int l = layers - 1; l >= 0; --l) {
            axpy(1.0 / m, matmul_nt(g, inputs[l]), grad[l]);
            if (l > 0) g = matmul_tn(weights[l], g);
        }
    }
    if (loss_out) *loss_out = loss / m;
    return grad;
}

void apply_update(WeightSet& weights, WeightSet& velocity, const WeightSet& grad,
                  const TrainerConfig& cfg) {
    if (velocity.empty()) {
        for (const auto& g : grad) velocity.emplace_back(g.rows, g.cols);
    }
    for (size_t l = 0; l < weights.size(); ++l) {
        for (size_t i = 0; i < velocity[l].data.size(); ++i) {
            velocity[l].data[i] =
                cfg.momentum * velocity[l].data[i] + (1.0 - cfg.momentum) * grad[l].data[i];
        }
        axpy(-cfg.learning_rate, velocity[l], weights[l]);
    }
}

Trajectory reference_loop(const ToyModel& model, const TrainerConfig& cfg, bool delayed,
                          std::vector<double>* losses) {
    cfg.validate();
    Trajectory traj;
    traj.push_back(model.init_weights);
    WeightSet weights = model.init_weights;
    WeightSet velocity;
    for (int t = 1; t <= cfg.num_batches; ++t) {
        const int eval_index = delayed ? std::max(t - 2, 0) : t - 1;
        double loss = 0.0;
        const WeightSet grad =
            batch_gradient(model, traj.at(eval_index), t, cfg.microbatches_per_batch, &loss);
        if (losses) losses->push_back(loss);
        apply_update(weights, velocity, grad, cfg);
        traj.push_back(weights);
    }
    return traj;
}

}  // namespace

Trajectory reference_vanilla(const ToyModel& model, const TrainerConfig& cfg) {
    return reference_loop(model, cfg, /*delayed=*/false, nullptr);
}

Trajectory reference_2bw(const ToyModel& model, const TrainerConfig& cfg) {
    return reference_loop(model, cfg, /*delayed=*/true, nullptr);
}

namespace {

struct StageState {
    std::map<int, WeightSet> versions;   // live weight versions
    WeightSet velocity;
    WeightSet grad_sum;
    int grad_count = 0;
    int updates_done = 0;
    size_t ptr = 0;
    std::map<int, std::pair<int, std::vector<Mat>>> stash;  // mb -> (version, layer inputs)
    std::map<int, Mat> out_act;       // mb -> stage output
    std::map<int, Mat> grad_to_prev;  // mb -> gradient for the upstream stage
    std::map<int, int> fwd_version;
    std::map<int, int> bwd_version;
    std::map<int, WeightSet> snapshots;  // update index -> weights created
};

void prune_versions(StageState& st, PipelinePolicy policy) {
    const int latest = st.updates_done;
    if (policy == PipelinePolicy::TwoBW) {
        st.versions.erase(latest - 2);
        return;
    }
    if (policy == PipelinePolicy::PipeDream1F1B) {
        std::vector<int> referenced;
        for (const auto& [mb, entry] : st.stash) referenced.push_back(entry.first);
        for (auto it = st.versions.begin(); it != st.versions.end();) {
            const int v = it->first;
            const bool keep = v == latest || std::find(referenced.begin(), referenced.end(),
                                                       v) != referenced.end();
            it = keep ? std::next(it) : st.versions.erase(it);
        }
        return;
    }
    // Single-version policies: the pipeline is drained at every update.
    for (auto it = st.versions.begin(); it != st.versions.end();) {
        it = it->first == latest ? std::next(it) : st.versions.erase(it);
    }
}

}  // namespace

PipelinedResult pipelined_execute(const ToyModel& model, const TrainerConfig& cfg,
                                  PipelinePolicy policy, int depth) {
    cfg.validate();
    const int layers = model.num_layers();
    if (layers % depth != 0) {
        throw Error("block count " + std::to_string(layers) + " not divisible by depth " +
                    std::to_string(depth));
    }
    const int per_stage = layers / depth;
    const int m = cfg.microbatches_per_batch;
    const int total_mbs = m * cfg.num_batches;
    if (static_cast<int>(model.dataset.size()) < total_mbs) {
        throw Error("toy dataset has too few microbatches for the requested run");
    }
    const int b = model.microbatch_samples();
    const auto programs = generate_schedule(policy, depth, m, cfg.num_batches);

    std::vector<StageState> stages(depth);
    for (int s = 0; s < depth; ++s) {
        WeightSet slice(model.init_weights.begin() + s * per_stage,
                        model.init_weights.begin() + (s + 1) * per_stage);
        stages[s].versions[0] = std::move(slice);
    }

    PipelinedResult result;
    result.version_consistent = true;
    result.max_versions_held = 1;

    size_t total_ops = 0;
    for (const auto& p : programs) total_ops += p.ops.size();
    size_t executed = 0;

    while (executed < total_ops) {
        bool progress = false;
        for (int s = 0; s < depth; ++s) {
            StageState& st = stages[s];
            const auto& ops = programs[s].ops;
            while (st.ptr < ops.size()) {
                const ScheduledOp& op = ops[st.ptr];
                const int k = op.microbatch;
                if (op.kind == OpKind::Forward) {
                    if (s > 0 && !stages[s - 1].out_act.count(k)) break;
                    const int version =
                        op.weight_version == kLatestVersion ? st.updates_done : op.weight_version;
                    auto vit = st.versions.find(version);
                    if (vit == st.versions.end()) {
                        throw Error("stage " + std::to_string(s) + " forward of microbatch " +
                                    std::to_string(k) + " needs discarded weight version " +
                                    std::to_string(version));
                    }
                    const WeightSet& weights = vit->second;
                    Mat cur = s == 0 ? model.dataset.at(k - 1).first
                                     : std::move(stages[s - 1].out_act.at(k));
                    if (s > 0) stages[s - 1].out_act.erase(k);
                    std::vector<Mat> inputs;
                    for (int l = 0; l < per_stage; ++l) {
                        inputs.push_back(cur);
                        cur = matmul(weights[l], cur);
                    }
                    st.stash[k] = {version, std::move(inputs)};
                    st.fwd_version[k] = version;
                    st.out_act[k] = std::move(cur);
                } else if (op.kind == OpKind::Backward) {
                    if (s < depth - 1 && !stages[s + 1].grad_to_prev.count(k)) break;
                    auto sit = st.stash.find(k);
                    if (sit == st.stash.end()) {
                        throw Error("backward before forward for microbatch " +
                                    std::to_string(k));
                    }
                    const int version = sit->second.first;
                    st.bwd_version[k] = version;
                    if (st.fwd_version.at(k) != version) result.version_consistent = false;
                    const WeightSet& weights = st.versions.at(version);
                    Mat g;
                    if (s == depth - 1) {
                        const Mat& out = st.out_act.at(k);
                        const Mat& y = model.dataset.at(k - 1).second;
                        g = Mat(out.rows, out.cols);
                        for (size_t i = 0; i < g.data.size(); ++i) {
                            g.data[i] = (out.data[i] - y.data[i]) / b;
                        }
                        st.out_act.erase(k);
                    } else {
                        g = std::move(stages[s + 1].grad_to_prev.at(k));
                        stages[s + 1].grad_to_prev.erase(k);
                    }
                    if (st.grad_sum.empty()) {
                        for (const auto& w : weights) st.grad_sum.emplace_back(w.rows, w.cols);
                    }
                    const auto& inputs = sit->second.second;
                    for (int l = per_stage - 1; l >= 0; --l) {
                        axpy(1.0, matmul_nt(g, inputs[l]), st.grad_sum[l]);
                        if (l > 0 || s > 0) g = matmul_tn(weights[l], g);
                    }
                    st.grad_count += 1;
                    if (s > 0) st.grad_to_prev[k] = std::move(g);
                    st.stash.erase(sit);
                } else if (op.kind == OpKind::WeightUpdate) {
                    if (st.grad_count == 0) throw Error("weight update with no gradients");
                    WeightSet grad = std::move(st.grad_sum);
                    for (auto& gm : grad) {
                        for (auto& v : gm.data) v /= st.grad_count;
                    }
                    WeightSet weights = st.versions.at(st.updates_done);
                    apply_update(weights, st.velocity, grad, cfg);
                    st.updates_done += 1;
                    st.versions[st.updates_done] = weights;
                    st.snapshots[st.updates_done] = std::move(weights);
                    prune_versions(st, policy);
                    st.grad_sum.clear();
                    st.grad_count = 0;
                    result.max_versions_held = std::max(result.max_versions_held,
                                                        static_cast<int>(st.versions.size()));
                } else {
                    // AllReduce and FlushBarrier are timing constructs; with a
                    // single replica they carry no semantics.
                }
                st.ptr += 1;
                executed += 1;
                progress = true;
            }
        }
        if (!progress) throw Error("dependency deadlock in toy-model replay");
    }

    // Assemble the per-batch trajectory from per-stage snapshots.
    const int updates_per_batch = policy == PipelinePolicy::PipeDream1F1B ? m : 1;
    result.trajectory.push_back(model.init_weights);
    for (int t = 1; t <= cfg.num_batches; ++t) {
        WeightSet full;
        for (int s = 0; s < depth; ++s) {
            const auto& snap = stages[s].snapshots.at(t * updates_per_batch);
            for (const auto& w : snap) full.push_back(w);
        }
        result.trajectory.push_back(std::move(full));
    }
    return result;
}

LossCurves loss_curve_compare(const ToyModel& model, const TrainerConfig& cfg) {
    LossCurves curves;
    reference_loop(model, cfg, /*delayed=*/false, &curves.vanilla);
    reference_loop(model, cfg, /*delayed=*/true, &curves.twobw);
    for (double v : curves.vanilla) curves.loss_scale = std::max(curves.loss_scale, v);
    const size_t tail_start = curves.vanilla.size() / 2;
    for (size_t i = tail_start; i < curves.vanilla.size(); ++i) {
        curves.tail_max_gap =
            std::max(curves.tail_max_gap, std::abs(curves.vanilla[i] - curves.twobw[i]));
    }
    return curves;
}

}  // namespace pipesim
