#include <doctest.h>

#include <chrono>

#include "pipesim/fixtures.hpp"
#include "pipesim/planner.hpp"

using namespace pipesim;

TEST_CASE("single worker degenerates to (1, 1)") {
    const auto model = fixture_uniform_model(4);
    const auto cluster = fixture_cluster(1, 1);
    const auto result = plan(model, cluster, 64);
    CHECK(result.best.width == 1);
    CHECK(result.best.depth == 1);
    CHECK(result.pairs_examined == 1);
    CHECK(result.grad_accum_for_cluster == 64 / result.best.microbatch_size);
}

TEST_CASE("sweep examines every (w, d) pair") {
    const auto model = fixture_uniform_model(8);
    const auto cluster = fixture_cluster(8, 8);
    const auto result = plan(model, cluster, 128);
    int expected = 0;
    for (int w = 1; w <= 8; ++w) expected += 8 / w;
    CHECK(result.pairs_examined == expected);
    CHECK(result.ranked.size() + result.rejected.size() ==
          static_cast<size_t>(result.pairs_examined));
}

TEST_CASE("every returned configuration is feasible") {
    const auto model = fixture_uniform_model(8);
    const auto cluster = fixture_cluster(8, 8);
    const long long max_batch = 128;
    const auto result = plan(model, cluster, max_batch);
    REQUIRE(!result.ranked.empty());
    for (const auto& s : result.ranked) {
        CHECK(s.feasible);
        CHECK(s.memory_bytes <= cluster.memory_capacity);
        CHECK(s.config.global_batch() <= max_batch);
        CHECK(s.config.width * s.config.depth <= cluster.total_workers);
    }
    // ranked list is sorted best-first
    for (size_t i = 1; i < result.ranked.size(); ++i) {
        CHECK(result.ranked[i - 1].throughput >= result.ranked[i].throughput);
    }
}

TEST_CASE("tight memory capacity forces recomputation") {
    // Without recomputation stage 0 needs ~16.2 GB; with it ~7.2 GB.
    const auto model = make_uniform_profile("fat", 4, 1e-3, 2e-3, 1e8, 3e9, 1e9, {1});
    ClusterSpec cluster = fixture_cluster(4, 4);
    cluster.memory_capacity = 8e9;
    const auto result = plan(model, cluster, 64);
    bool found_deep = false;
    for (const auto& s : result.ranked) {
        if (s.config.depth == 4) {
            CHECK(s.config.recompute);
            found_deep = true;
        }
    }
    CHECK(found_deep);
}

TEST_CASE("no feasible configuration is an error with reasons") {
    const auto model = make_uniform_profile("fat", 4, 1e-3, 2e-3, 1e8, 3e9, 1e9, {1});
    ClusterSpec cluster = fixture_cluster(4, 4);
    cluster.memory_capacity = 1e6;
    CHECK_THROWS_WITH_AS(plan(model, cluster, 64), doctest::Contains("no feasible"), Error);
    CHECK_THROWS_AS(plan(model, cluster, 0), Error);
}

TEST_CASE("planner choice matches a simulator-scored exhaustive search") {
    const auto model = fixture_uniform_model(8);
    const long long max_batch = 128;
    for (int workers : {8, 16}) {
        const auto cluster = fixture_cluster(workers, 8);
        const auto result = plan(model, cluster, max_batch);

        auto simulated = [&](const ParallelConfig& cfg) {
            return simulate_policy(PipelinePolicy::TwoBW, model, cluster, cfg, 5).throughput;
        };
        double best_sim = 0.0;
        for (int w = 1; w <= workers; ++w) {
            for (int d = 1; d * w <= workers; ++d) {
                if (8 % d != 0) continue;
                for (int b : {1, 2, 4}) {
                    const long long g = max_batch / (static_cast<long long>(w) * d * b);
                    if (g < 1) continue;
                    for (bool r : {false, true}) {
                        ParallelConfig cfg{w, d, b, r, static_cast<int>(g)};
                        best_sim = std::max(best_sim, simulated(cfg));
                    }
                }
            }
        }
        INFO("workers=", workers);
        CHECK(simulated(result.best) >= 0.98 * best_sim);
    }
}

TEST_CASE("closed-form sweep finishes fast at 64 workers") {
    const auto model = fixture_uniform_model(8);
    const auto cluster = fixture_cluster(64, 8);
    const auto start = std::chrono::steady_clock::now();
    const auto result = plan(model, cluster, 4096);
    const double elapsed =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    CHECK(!result.ranked.empty());
    CHECK(elapsed < 1.0);
}

TEST_CASE("validation closes the loop against the simulator") {
    const auto model = fixture_uniform_model(4);
    const auto cluster = fixture_cluster(4, 8);
    const auto result = plan(model, cluster, 64);
    const auto report = validate_plan(result, model, cluster, 50);
    CHECK(report.throughput_rel_error <= 0.02);
    CHECK(report.memory_rel_error <= 1e-12);

    PlanResult empty;
    CHECK_THROWS_WITH_AS(validate_plan(empty, model, cluster, 10),
                         doctest::Contains("feasible"), Error);
}

TEST_CASE("plan reports serialize") {
    const auto model = fixture_uniform_model(4);
    const auto result = plan(model, fixture_cluster(4, 8), 64);
    const std::string text = plan_to_text(result);
    CHECK(text.find("best configuration") != std::string::npos);
    CHECK(text.find("samples/s") != std::string::npos);
    const std::string json = plan_to_json(result);
    CHECK(json.find("\"ranked\"") != std::string::npos);
    CHECK(json.find("\"pairs_examined\"") != std::string::npos);
}
