#include <doctest.h>

#include <fstream>
#include <sstream>

#include "pipesim/fixtures.hpp"
#include "pipesim/render.hpp"

using namespace pipesim;

namespace {

std::string read_data_file(const std::string& name) {
    std::ifstream in(std::string(TESTS_DATA_DIR) + "/" + name, std::ios::binary);
    REQUIRE(in.good());
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

}  // namespace

TEST_CASE("ascii gantt matches the golden file") {
    const auto report = fixture_gpipe_d2_report(3);
    const std::string rendered = render_timeline(report, RenderFormat::Ascii);
    CHECK(rendered == read_data_file("gpipe_d2_ascii.txt"));
}

TEST_CASE("rendering is deterministic") {
    const auto report = fixture_figure2_report(3);
    CHECK(render_timeline(report, RenderFormat::Svg) ==
          render_timeline(report, RenderFormat::Svg));
    CHECK(render_timeline(report, RenderFormat::Ascii) ==
          render_timeline(report, RenderFormat::Ascii));
}

TEST_CASE("svg labels the last worker's ninth forward with version 1") {
    const auto report = fixture_figure2_report(3);
    const std::string svg = render_timeline(report, RenderFormat::Svg);
    // worker 3 (the fourth stage) draws its op labels at y = 24 + 36*3 + 16
    bool found = false;
    std::istringstream lines(svg);
    std::string line;
    while (std::getline(lines, line)) {
        if (line.find(">F9 v1<") != std::string::npos &&
            line.find("y=\"148\"") != std::string::npos) {
            found = true;
        }
    }
    CHECK(found);
    CHECK(svg.rfind("<svg", 0) == 0);  // self-contained document
    CHECK(svg.find("</svg>") != std::string::npos);
}

TEST_CASE("ascii output distinguishes op kinds and labels microbatches") {
    const auto report = fixture_gpipe_d2_report(3);
    const std::string ascii = render_timeline(report, RenderFormat::Ascii);
    CHECK(ascii.find("F1") != std::string::npos);
    CHECK(ascii.find("B12") != std::string::npos);
    CHECK(ascii.find("U") != std::string::npos);
    CHECK(ascii.find("policy=gpipe") != std::string::npos);
}

TEST_CASE("render errors") {
    CHECK_THROWS_WITH_AS(parse_render_format("png"), doctest::Contains("png"), Error);
    SimReport empty;
    CHECK_THROWS_WITH_AS(render_timeline(empty, RenderFormat::Ascii),
                         doctest::Contains("empty"), Error);
}
