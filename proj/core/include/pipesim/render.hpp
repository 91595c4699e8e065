#pragma once

#include <string>

#include "pipesim/simulator.hpp"

namespace pipesim {

enum class RenderFormat { Ascii, Svg };

RenderFormat parse_render_format(const std::string& name);  // "ascii" | "svg"

// Deterministic Gantt view of a simulated timeline: one row per worker,
// forward/backward/recompute boxes labeled with microbatch ids (and the
// weight version, for forwards). Throws on an empty timeline.
std::string render_timeline(const SimReport& report, RenderFormat format);

}  // namespace pipesim
