#include <doctest.h>

#include "pipesim/fixtures.hpp"
#include "pipesim/profile.hpp"

using namespace pipesim;

TEST_CASE("model profile serialization round-trips") {
    const ModelProfile model = fixture_uniform_model(4);
    const std::string once = serialize_model_profile(model);
    const ModelProfile reloaded = load_model_profile(once);
    CHECK(serialize_model_profile(reloaded) == once);
    CHECK(reloaded.blocks.size() == 4);
    CHECK(reloaded.blocks[0].fwd_time.at(2) == doctest::Approx(2e-3));
    CHECK(reloaded.blocks[0].act_boundary_bytes.at(4) == doctest::Approx(2e6));
}

TEST_CASE("cluster spec serialization round-trips") {
    const ClusterSpec cluster = fixture_cluster(8, 4);
    const std::string once = serialize_cluster_spec(cluster);
    const ClusterSpec reloaded = load_cluster_spec(once);
    CHECK(serialize_cluster_spec(reloaded) == once);
    CHECK(reloaded.total_workers == 8);
    CHECK(reloaded.bandwidth_high == doctest::Approx(1e12));
}

TEST_CASE("profile invariant violations name the offending field") {
    ModelProfile model = fixture_uniform_model(2);
    model.blocks[1].act_input_bytes[1] = 1e9;  // above act_total at b=1
    CHECK_THROWS_WITH_AS(model.validate(),
                         doctest::Contains("act_input_bytes exceeds act_total_bytes"), Error);

    ModelProfile mismatched = fixture_uniform_model(2);
    mismatched.blocks[0].bwd_time.erase(4);
    CHECK_THROWS_WITH_AS(mismatched.validate(), doctest::Contains("bwd_time"), Error);

    ModelProfile negative = fixture_uniform_model(1);
    negative.blocks[0].fwd_time[2] = 0.0;
    CHECK_THROWS_WITH_AS(negative.validate(), doctest::Contains("fwd_time must be > 0"), Error);
}

TEST_CASE("malformed documents are rejected with context") {
    CHECK_THROWS_WITH_AS(load_model_profile("not json"), doctest::Contains("malformed"), Error);
    CHECK_THROWS_WITH_AS(load_model_profile("{\"model\": \"x\"}"), doctest::Contains("blocks"),
                         Error);
    CHECK_THROWS_WITH_AS(
        load_model_profile("{\"model\": \"x\", \"blocks\": [{\"fwd_ms\": {\"1\": 1}}]}"),
        doctest::Contains("bwd_ms"), Error);
    CHECK_THROWS_WITH_AS(load_cluster_spec("{}"), doctest::Contains("total_workers"), Error);
}

TEST_CASE("table lookups never interpolate") {
    const ModelProfile model = fixture_uniform_model(1);
    CHECK(table_at(model.blocks[0].fwd_time, 2, "fwd_time") == doctest::Approx(2e-3));
    CHECK_THROWS_WITH_AS(table_at(model.blocks[0].fwd_time, 3, "fwd_time"),
                         doctest::Contains("microbatch size 3"), Error);
}

TEST_CASE("equal partitioning sums block measurements") {
    const ModelProfile model = fixture_uniform_model(8);
    const auto stages = partition_equal(model, 4);
    REQUIRE(stages.size() == 4);
    for (const auto& st : stages) {
        CHECK(st.fwd_time.at(1) == doctest::Approx(2e-3));   // 2 blocks of 1 ms
        CHECK(st.bwd_time.at(1) == doctest::Approx(4e-3));
        CHECK(st.weight_bytes == doctest::Approx(2e8));
        CHECK(st.act_total_bytes.at(2) == doctest::Approx(4e6));
        CHECK(st.act_input_bytes.at(1) == doctest::Approx(2.5e5));
        // uniform blocks: output activation equals the input activation
        CHECK(st.act_output_bytes.at(1) == doctest::Approx(2.5e5));
    }
    CHECK_THROWS_WITH_AS(partition_equal(model, 3), doctest::Contains("does not divide"), Error);
}

TEST_CASE("parallel config validation") {
    const ClusterSpec cluster = fixture_cluster(4, 4);
    ParallelConfig cfg;
    cfg.width = 2;
    cfg.depth = 2;
    CHECK(cfg.microbatches_per_batch() == 2);
    CHECK(cfg.global_batch() == 4);
    CHECK_NOTHROW(cfg.validate(cluster));
    cfg.depth = 4;
    CHECK_THROWS_WITH_AS(cfg.validate(cluster), doctest::Contains("exceeds total_workers"),
                         Error);
}
