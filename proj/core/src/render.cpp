#include "pipesim/render.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace pipesim {

namespace {

char kind_letter(OpKind kind) {
    switch (kind) {
        case OpKind::Forward: return 'F';
        case OpKind::Backward: return 'B';
        case OpKind::Recompute: return 'R';
        case OpKind::WeightUpdate: return 'U';
        case OpKind::FlushBarrier: return '|';
        case OpKind::AllReduce: return 'A';
        default: return '?';
    }
}

const char* kind_color(OpKind kind) {
    switch (kind) {
        case OpKind::Forward: return "#4e79a7";
        case OpKind::Backward: return "#59a14f";
        case OpKind::Recompute: return "#9c755f";
        case OpKind::AllReduce: return "#f28e2b";
        default: return "#bab0ac";
    }
}

bool compute_box(OpKind kind) {
    return kind == OpKind::Forward || kind == OpKind::Backward || kind == OpKind::Recompute;
}

std::string op_label(const ScheduledOp& op) {
    std::string label(1, kind_letter(op.kind));
    if (op.microbatch > 0) label += std::to_string(op.microbatch);
    if (op.kind == OpKind::Forward) {
        label += " v";
        label += op.weight_version == kLatestVersion ? "?" : std::to_string(op.weight_version);
    }
    return label;
}

std::string format_time(double t) {
    std::ostringstream out;
    out << t;
    return out.str();
}

std::string render_ascii(const SimReport& report) {
    double min_dur = 0.0;
    double max_end = 0.0;
    for (const auto& e : report.timeline) {
        max_end = std::max(max_end, e.end);
        if (e.lane != Lane::Compute) continue;
        const double dur = e.end - e.start;
        if (dur > 0.0 && (min_dur == 0.0 || dur < min_dur)) min_dur = dur;
    }
    if (min_dur == 0.0) min_dur = max_end > 0.0 ? max_end : 1.0;
    const double scale = 4.0 / min_dur;  // shortest box spans 4 cells
    const int width = static_cast<int>(std::lround(max_end * scale)) + 1;

    std::vector<std::string> rows(static_cast<size_t>(report.config.depth),
                                  std::string(static_cast<size_t>(width), '.'));
    for (const auto& e : report.timeline) {
        if (e.lane != Lane::Compute) continue;
        auto& row = rows.at(static_cast<size_t>(e.worker));
        const int c0 = static_cast<int>(std::lround(e.start * scale));
        const int c1 = static_cast<int>(std::lround(e.end * scale));
        if (c1 == c0) {  // instantaneous marker (weight update, flush barrier)
            row[static_cast<size_t>(std::min(c0, width - 1))] = kind_letter(e.op.kind);
            continue;
        }
        for (int c = c0; c < c1; ++c) row[static_cast<size_t>(c)] = kind_letter(e.op.kind);
        if (c1 - 1 < width) row[static_cast<size_t>(c1 - 1)] = ']';
        std::string label = op_label(e.op);
        for (size_t i = 0; i < label.size() && c0 + static_cast<int>(i) < c1 - 1; ++i)
            row[static_cast<size_t>(c0) + i] = label[i];
    }

    std::ostringstream out;
    out << "policy=" << to_string(report.policy) << " d=" << report.config.depth
        << " m=" << report.config.microbatches_per_batch() << " batches=" << report.num_batches
        << "\n";
    for (int s = 0; s < report.config.depth; ++s) out << "w" << s << " " << rows[s] << "\n";
    return out.str();
}

std::string render_svg(const SimReport& report) {
    const double row_height = 36.0;
    const double box_height = 24.0;
    const double left = 48.0;
    double max_end = 0.0;
    for (const auto& e : report.timeline) max_end = std::max(max_end, e.end);
    const double px = 900.0 / max_end;
    const double width = left + 900.0 + 16.0;
    const double height = row_height * report.config.depth + 24.0;

    std::ostringstream out;
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << format_time(width)
        << "\" height=\"" << format_time(height) << "\" font-family=\"monospace\" font-size=\"10\">\n";
    out << "<text x=\"4\" y=\"12\">" << to_string(report.policy) << " d=" << report.config.depth
        << " m=" << report.config.microbatches_per_batch() << "</text>\n";
    for (int s = 0; s < report.config.depth; ++s) {
        const double y = 24.0 + row_height * s;
        out << "<text x=\"4\" y=\"" << format_time(y + box_height - 8.0) << "\">w" << s
            << "</text>\n";
    }
    for (const auto& e : report.timeline) {
        const double y = 24.0 + row_height * e.worker;
        const double x = left + e.start * px;
        if (compute_box(e.op.kind)) {
            const double w = (e.end - e.start) * px;
            out << "<rect x=\"" << format_time(x) << "\" y=\"" << format_time(y) << "\" width=\""
                << format_time(w) << "\" height=\"" << format_time(box_height) << "\" fill=\""
                << kind_color(e.op.kind) << "\" stroke=\"#333\"/>\n";
            out << "<text x=\"" << format_time(x + 2.0) << "\" y=\""
                << format_time(y + box_height - 8.0) << "\" fill=\"#fff\">" << op_label(e.op)
                << "</text>\n";
        } else if (e.op.kind == OpKind::WeightUpdate || e.op.kind == OpKind::FlushBarrier) {
            out << "<line x1=\"" << format_time(x) << "\" y1=\"" << format_time(y) << "\" x2=\""
                << format_time(x) << "\" y2=\"" << format_time(y + box_height)
                << "\" stroke=\"" << (e.op.kind == OpKind::WeightUpdate ? "#e15759" : "#333")
                << "\" stroke-width=\"2\"/>\n";
        } else if (e.op.kind == OpKind::AllReduce) {
            const double w = (e.end - e.start) * px;
            out << "<rect x=\"" << format_time(x) << "\" y=\""
                << format_time(y + box_height + 2.0) << "\" width=\"" << format_time(w)
                << "\" height=\"6\" fill=\"" << kind_color(e.op.kind) << "\"/>\n";
        }
    }
    out << "</svg>\n";
    return out.str();
}

}  // namespace

RenderFormat parse_render_format(const std::string& name) {
    if (name == "ascii") return RenderFormat::Ascii;
    if (name == "svg") return RenderFormat::Svg;
    throw Error("unsupported render format: " + name);
}

std::string render_timeline(const SimReport& report, RenderFormat format) {
    if (report.timeline.empty()) throw Error("cannot render an empty timeline");
    return format == RenderFormat::Ascii ? render_ascii(report) : render_svg(report);
}

}  // namespace pipesim
