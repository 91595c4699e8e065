#include "pipesim/profile.hpp"

#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

namespace pipesim {

using json = nlohmann::json;

double table_at(const BTable& table, int b, const std::string& field) {
    auto it = table.find(b);
    if (it == table.end()) {
        throw Error("no profile entry for microbatch size " + std::to_string(b) +
                    " in " + field);
    }
    return it->second;
}

namespace {

std::vector<int> keys_of(const BTable& t) {
    std::vector<int> keys;
    keys.reserve(t.size());
    for (const auto& [k, _] : t) keys.push_back(k);
    return keys;
}

void check_same_keys(const BTable& a, const BTable& b, const std::string& name_a,
                     const std::string& name_b, const std::string& context) {
    if (keys_of(a) != keys_of(b)) {
        throw Error(context + ": microbatch-size keys of " + name_a +
                    " do not match " + name_b);
    }
}

}  // namespace

void BlockProfile::validate(const std::string& context) const {
    if (fwd_time.empty()) throw Error(context + ": fwd_time table is empty");
    for (const auto& [b, v] : fwd_time) {
        if (v <= 0) throw Error(context + ": fwd_time must be > 0 at b=" + std::to_string(b));
    }
    for (const auto& [b, v] : bwd_time) {
        if (v <= 0) throw Error(context + ": bwd_time must be > 0 at b=" + std::to_string(b));
    }
    if (weight_bytes < 0) throw Error(context + ": weight_bytes must be >= 0");
    for (const auto* t : {&act_total_bytes, &act_input_bytes, &act_boundary_bytes}) {
        for (const auto& [b, v] : *t) {
            if (v < 0) throw Error(context + ": activation byte counts must be >= 0");
        }
    }
    check_same_keys(fwd_time, bwd_time, "fwd_time", "bwd_time", context);
    check_same_keys(fwd_time, act_total_bytes, "fwd_time", "act_total_bytes", context);
    check_same_keys(fwd_time, act_input_bytes, "fwd_time", "act_input_bytes", context);
    check_same_keys(fwd_time, act_boundary_bytes, "fwd_time", "act_boundary_bytes", context);
    for (const auto& [b, v] : act_input_bytes) {
        if (v > act_total_bytes.at(b)) {
            throw Error(context + ": act_input_bytes exceeds act_total_bytes at b=" +
                        std::to_string(b));
        }
    }
}

std::vector<int> BlockProfile::microbatch_sizes() const { return keys_of(fwd_time); }

void ModelProfile::validate() const {
    if (blocks.empty()) throw Error("model '" + name + "': blocks must be non-empty");
    const auto keys = blocks.front().microbatch_sizes();
    for (size_t i = 0; i < blocks.size(); ++i) {
        const std::string ctx = "model '" + name + "' block " + std::to_string(i);
        blocks[i].validate(ctx);
        if (blocks[i].microbatch_sizes() != keys) {
            throw Error(ctx + ": microbatch-size keys differ from block 0");
        }
    }
}

double ModelProfile::total_weight_bytes() const {
    double total = 0.0;
    for (const auto& b : blocks) total += b.weight_bytes;
    return total;
}

void ClusterSpec::validate() const {
    if (total_workers < 1) throw Error("total_workers must be >= 1");
    if (gpus_per_server < 1) throw Error("gpus_per_server must be >= 1");
    if (bandwidth_low <= 0) throw Error("bandwidth_low must be > 0");
    if (bandwidth_high < bandwidth_low) throw Error("bandwidth_high must be >= bandwidth_low");
    if (memory_capacity <= 0) throw Error("memory_capacity must be > 0");
}

void ParallelConfig::validate(const ClusterSpec& cluster) const {
    if (width < 1) throw Error("width must be >= 1");
    if (depth < 1) throw Error("depth must be >= 1");
    if (microbatch_size < 1) throw Error("microbatch_size must be >= 1");
    if (grad_accum < 1) throw Error("grad_accum must be >= 1");
    if (static_cast<long long>(width) * depth > cluster.total_workers) {
        throw Error("width*depth exceeds total_workers");
    }
}

std::vector<StageProfile> partition_equal(const ModelProfile& model, int d) {
    model.validate();
    const int n = static_cast<int>(model.blocks.size());
    if (d < 1) throw Error("depth must be >= 1");
    if (n % d != 0) {
        throw Error("depth " + std::to_string(d) + " does not divide block count " +
                    std::to_string(n));
    }
    const int per_stage = n / d;
    std::vector<StageProfile> stages(d);
    for (int s = 0; s < d; ++s) {
        StageProfile& st = stages[s];
        const BlockProfile& first = model.blocks[s * per_stage];
        const BlockProfile& last = model.blocks[(s + 1) * per_stage - 1];
        st.act_input_bytes = first.act_input_bytes;
        for (const auto& [b, v] : last.act_boundary_bytes) {
            st.act_output_bytes[b] = v - last.act_input_bytes.at(b);
        }
        for (int i = s * per_stage; i < (s + 1) * per_stage; ++i) {
            const BlockProfile& blk = model.blocks[i];
            st.weight_bytes += blk.weight_bytes;
            for (const auto& [b, v] : blk.fwd_time) st.fwd_time[b] += v;
            for (const auto& [b, v] : blk.bwd_time) st.bwd_time[b] += v;
            for (const auto& [b, v] : blk.act_total_bytes) st.act_total_bytes[b] += v;
        }
    }
    return stages;
}

namespace {

BTable table_from_json(const json& j, const std::string& field, double scale) {
    if (!j.is_object()) throw Error(field + ": expected a map of microbatch size to number");
    BTable t;
    for (const auto& [key, value] : j.items()) {
        int b = 0;
        try {
            b = std::stoi(key);
        } catch (const std::exception&) {
            throw Error(field + ": non-integer microbatch-size key '" + key + "'");
        }
        if (!value.is_number()) throw Error(field + ": value at b=" + key + " is not a number");
        t[b] = value.get<double>() * scale;
    }
    return t;
}

json table_to_json(const BTable& t, double scale) {
    json j = json::object();
    for (const auto& [b, v] : t) j[std::to_string(b)] = v * scale;
    return j;
}

constexpr double kMs = 1e-3;
constexpr double kGb = 1e9;

}  // namespace

ModelProfile load_model_profile(const std::string& text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        throw Error(std::string("malformed profile document: ") + e.what());
    }
    if (!doc.contains("model")) throw Error("profile document: missing 'model'");
    if (!doc.contains("blocks") || !doc["blocks"].is_array()) {
        throw Error("profile document: missing 'blocks' array");
    }
    ModelProfile model;
    model.name = doc["model"].get<std::string>();
    for (const auto& jb : doc["blocks"]) {
        BlockProfile blk;
        for (const char* key :
             {"fwd_ms", "bwd_ms", "weight_bytes", "act_total_bytes", "act_input_bytes",
              "act_boundary_bytes"}) {
            if (!jb.contains(key)) throw Error(std::string("profile block: missing '") + key + "'");
        }
        blk.fwd_time = table_from_json(jb["fwd_ms"], "fwd_ms", kMs);
        blk.bwd_time = table_from_json(jb["bwd_ms"], "bwd_ms", kMs);
        blk.weight_bytes = jb["weight_bytes"].get<double>();
        blk.act_total_bytes = table_from_json(jb["act_total_bytes"], "act_total_bytes", 1.0);
        blk.act_input_bytes = table_from_json(jb["act_input_bytes"], "act_input_bytes", 1.0);
        blk.act_boundary_bytes =
            table_from_json(jb["act_boundary_bytes"], "act_boundary_bytes", 1.0);
        model.blocks.push_back(std::move(blk));
    }
    model.validate();
    return model;
}

std::string serialize_model_profile(const ModelProfile& model) {
    json doc;
    doc["model"] = model.name;
    doc["blocks"] = json::array();
    for (const auto& blk : model.blocks) {
        json jb;
        jb["fwd_ms"] = table_to_json(blk.fwd_time, 1.0 / kMs);
        jb["bwd_ms"] = table_to_json(blk.bwd_time, 1.0 / kMs);
        jb["weight_bytes"] = blk.weight_bytes;
        jb["act_total_bytes"] = table_to_json(blk.act_total_bytes, 1.0);
        jb["act_input_bytes"] = table_to_json(blk.act_input_bytes, 1.0);
        jb["act_boundary_bytes"] = table_to_json(blk.act_boundary_bytes, 1.0);
        doc["blocks"].push_back(std::move(jb));
    }
    return doc.dump(2);
}

ClusterSpec load_cluster_spec(const std::string& text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        throw Error(std::string("malformed cluster document: ") + e.what());
    }
    for (const char* key : {"total_workers", "gpus_per_server", "bandwidth_high_gbps",
                            "bandwidth_low_gbps", "memory_capacity_gb"}) {
        if (!doc.contains(key)) throw Error(std::string("cluster document: missing '") + key + "'");
    }
    ClusterSpec c;
    c.total_workers = doc["total_workers"].get<int>();
    c.gpus_per_server = doc["gpus_per_server"].get<int>();
    c.bandwidth_high = doc["bandwidth_high_gbps"].get<double>() * kGb;
    c.bandwidth_low = doc["bandwidth_low_gbps"].get<double>() * kGb;
    c.memory_capacity = doc["memory_capacity_gb"].get<double>() * kGb;
    c.validate();
    return c;
}

std::string serialize_cluster_spec(const ClusterSpec& cluster) {
    json doc;
    doc["total_workers"] = cluster.total_workers;
    doc["gpus_per_server"] = cluster.gpus_per_server;
    doc["bandwidth_high_gbps"] = cluster.bandwidth_high / kGb;
    doc["bandwidth_low_gbps"] = cluster.bandwidth_low / kGb;
    doc["memory_capacity_gb"] = cluster.memory_capacity / kGb;
    return doc.dump(2);
}

namespace {
std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}
}  // namespace

ModelProfile load_model_profile_file(const std::string& path) {
    return load_model_profile(read_file(path));
}

ClusterSpec load_cluster_spec_file(const std::string& path) {
    return load_cluster_spec(read_file(path));
}

ModelProfile make_uniform_profile(const std::string& name, int num_blocks,
                                  double fwd_seconds_b1, double bwd_seconds_b1,
                                  double weight_bytes, double act_total_bytes_b1,
                                  double act_input_bytes_b1,
                                  const std::vector<int>& microbatch_sizes) {
    if (num_blocks < 1) throw Error("uniform profile needs at least one block");
    if (microbatch_sizes.empty()) throw Error("uniform profile needs microbatch sizes");
    BlockProfile blk;
    blk.weight_bytes = weight_bytes;
    for (int b : microbatch_sizes) {
        blk.fwd_time[b] = fwd_seconds_b1 * b;
        blk.bwd_time[b] = bwd_seconds_b1 * b;
        blk.act_total_bytes[b] = act_total_bytes_b1 * b;
        blk.act_input_bytes[b] = act_input_bytes_b1 * b;
        blk.act_boundary_bytes[b] = 2.0 * act_input_bytes_b1 * b;
    }
    ModelProfile model;
    model.name = name;
    model.blocks.assign(num_blocks, blk);
    model.validate();
    return model;
}

}  // namespace pipesim
