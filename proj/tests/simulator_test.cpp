#include <doctest.h>

#include <cmath>
#include <map>

#include "pipesim/costmodel.hpp"
#include "pipesim/fixtures.hpp"
#include "pipesim/simulator.hpp"

using namespace pipesim;

namespace {

// Unit-time model: t_f = 1 s, t_b = 2 s per stage, no bytes anywhere, so
// hand-traced schedules can be checked exactly.
ModelProfile unit_model(int blocks) {
    return make_uniform_profile("unit", blocks, 1.0, 2.0, 0.0, 0.0, 0.0, {1});
}

ClusterSpec unit_cluster(int workers) {
    ClusterSpec c;
    c.total_workers = workers;
    c.gpus_per_server = workers;
    c.bandwidth_high = 1e12;
    c.bandwidth_low = 1e12;
    c.memory_capacity = 1e12;
    return c;
}

ParallelConfig config(int w, int d, int b, int g, bool recompute = false) {
    ParallelConfig cfg;
    cfg.width = w;
    cfg.depth = d;
    cfg.microbatch_size = b;
    cfg.grad_accum = g;
    cfg.recompute = recompute;
    return cfg;
}

double op_end(const SimReport& report, int worker, OpKind kind, int mb) {
    for (const auto& e : report.timeline) {
        if (e.worker == worker && e.op.kind == kind && e.op.microbatch == mb) return e.end;
    }
    FAIL("timeline entry not found");
    return -1.0;
}

}  // namespace

TEST_CASE("gpipe hand trace: d=2, m=4, unit times") {
    // Batch 1 by hand: stage 1 runs F1..F4 at 1..5 then B1..B4 back to back,
    // finishing B4 at 13; stage 0 starts B1 only once stage 1's gradient is
    // out at 7, so its B4 ends at 15 — one batch spans 15 units on stage 0.
    const auto report = simulate_policy(PipelinePolicy::GPipe, unit_model(2), unit_cluster(2),
                                        config(1, 2, 1, 2), 3);
    CHECK(op_end(report, 1, OpKind::Backward, 4) == doctest::Approx(13.0));
    CHECK(op_end(report, 0, OpKind::Backward, 4) == doctest::Approx(15.0));
    CHECK(report.steady_batch_time == doctest::Approx(15.0));
    CHECK(report.throughput == doctest::Approx(4.0 / 15.0));
}

TEST_CASE("degenerate pipeline has no bubble") {
    const auto report = simulate_policy(PipelinePolicy::NoPipelining, unit_model(1),
                                        unit_cluster(1), config(1, 1, 1, 1), 5);
    CHECK(report.throughput == doctest::Approx(1.0 / 3.0));
    CHECK(report.bubble_fraction == doctest::Approx(0.0));
}

TEST_CASE("double-buffering drives the steady bubble to zero") {
    const double few = fixture_figure2_report(5).bubble_fraction;
    const double many = fixture_figure2_report(40).bubble_fraction;
    CHECK(many < 0.01);
    CHECK(many <= few + 1e-12);
}

TEST_CASE("identical inputs give byte-identical reports") {
    const auto a = report_to_json(fixture_figure2_report(6));
    const auto b = report_to_json(fixture_figure2_report(6));
    CHECK(a == b);
}

TEST_CASE("report serialization round-trips") {
    const auto report = fixture_gpipe_d2_report(3);
    const std::string once = report_to_json(report);
    CHECK(report_to_json(report_from_json(once)) == once);
    CHECK_THROWS_WITH_AS(report_from_json("{]"), doctest::Contains("malformed"), Error);
    CHECK_THROWS_WITH_AS(report_from_json("{\"policy\": \"2bw\"}"),
                         doctest::Contains("malformed"), Error);
}

TEST_CASE("forwards respect upstream completion plus transfer time") {
    const auto report = fixture_figure2_report(5);
    const ModelProfile model = fixture_uniform_model(4);
    const auto stages = partition_equal(model, 4);
    const ClusterSpec cluster = fixture_cluster(4, 4);
    const double xfer =
        table_at(stages[0].act_output_bytes, 1, "act_output_bytes") /
        bwdth_depth(4, 1, cluster);
    CHECK(xfer > 0.0);
    std::map<std::pair<int, int>, double> fwd_end;
    for (const auto& e : report.timeline) {
        if (e.lane != Lane::Compute || e.op.kind != OpKind::Forward) continue;
        fwd_end[{e.worker, e.op.microbatch}] = e.end;
    }
    int checked = 0;
    for (const auto& e : report.timeline) {
        if (e.lane != Lane::Compute || e.op.kind != OpKind::Forward || e.worker == 0) continue;
        CHECK(e.start >= fwd_end.at({e.worker - 1, e.op.microbatch}) + xfer - 1e-15);
        ++checked;
    }
    CHECK(checked > 0);
}

TEST_CASE("compute ops on one worker never overlap") {
    const auto report = fixture_figure2_report(5);
    std::map<int, double> last_end;
    for (const auto& e : report.timeline) {  // sorted by (worker, start)
        if (e.lane != Lane::Compute) continue;
        auto [it, fresh] = last_end.try_emplace(e.worker, e.end);
        if (!fresh) {
            CHECK(e.start >= it->second - 1e-15);
            it->second = std::max(it->second, e.end);
        }
    }
}

TEST_CASE("simulated peaks equal the closed-form footprints exactly") {
    for (PipelinePolicy policy :
         {PipelinePolicy::NoPipelining, PipelinePolicy::GPipe, PipelinePolicy::PipeDreamFlush,
          PipelinePolicy::TwoBW, PipelinePolicy::PipeDream1F1B}) {
        for (int d : {2, 4}) {
            for (int g : {1, 2}) {
                for (bool recompute : {false, true}) {
                    const auto model = fixture_uniform_model(d);
                    const auto cluster = fixture_cluster(d, 8);
                    const auto cfg = config(1, d, 2, g, recompute);
                    const auto report = simulate_policy(policy, model, cluster, cfg, 4);
                    CostInputs in{partition_equal(model, d), cluster, cfg};
                    const auto predicted = memory_footprint_per_stage(in, policy, recompute);
                    const auto simulated = measure_high_water(report);
                    REQUIRE(simulated.size() == predicted.size());
                    for (size_t s = 0; s < predicted.size(); ++s) {
                        INFO(to_string(policy), " d=", d, " g=", g, " r=", recompute,
                             " stage=", s);
                        CHECK(simulated[s] == predicted[s]);  // exact, same arithmetic
                    }
                }
            }
        }
    }
}

TEST_CASE("flush-policy throughput is nondecreasing in m") {
    for (PipelinePolicy policy : {PipelinePolicy::GPipe, PipelinePolicy::PipeDreamFlush}) {
        double prev = 0.0;
        for (int g : {1, 2, 4, 8}) {
            const auto report = simulate_policy(policy, fixture_uniform_model(2),
                                                fixture_cluster(2, 8), config(1, 2, 1, g), 4);
            CHECK(report.throughput > prev);
            prev = report.throughput;
        }
    }
}

TEST_CASE("malformed programs are rejected") {
    const auto model = unit_model(2);
    const auto cluster = unit_cluster(2);
    SUBCASE("deadlocked dependency") {
        auto programs = parse_programs(
            "stage=0 op=forward mb=2 ver=0\n"
            "stage=1 op=forward mb=1 ver=0\n");
        CHECK_THROWS_WITH_AS(
            simulate(programs, PipelinePolicy::GPipe, model, cluster, config(1, 2, 1, 1), 3),
            doctest::Contains("deadlock"), Error);
    }
    SUBCASE("backward before forward") {
        auto programs = parse_programs("stage=0 op=backward mb=1 ver=0\n");
        CHECK_THROWS_WITH_AS(
            simulate(programs, PipelinePolicy::GPipe, unit_model(1), cluster,
                     config(1, 1, 1, 1), 3),
            doctest::Contains("precedes its forward"), Error);
    }
    SUBCASE("too few batches for a steady window") {
        CHECK_THROWS_WITH_AS(simulate_policy(PipelinePolicy::GPipe, model, cluster,
                                             config(1, 2, 1, 1), 2),
                             doctest::Contains("num_batches"), Error);
    }
    SUBCASE("microbatch size absent from the profile") {
        CHECK_THROWS_WITH_AS(simulate_policy(PipelinePolicy::GPipe, model, cluster,
                                             config(1, 2, 7, 1), 3),
                             doctest::Contains("microbatch size 7"), Error);
    }
}
