#include "advlab/svg.hpp"

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <fstream>

#include "advlab/errors.hpp"

namespace advlab {
namespace {

// Figure geometry, in SVG user units.
constexpr double kW = 720.0, kH = 440.0;
constexpr double kLeft = 62.0, kRight = 24.0, kTop = 24.0, kBottom = 52.0;
constexpr double kPlotW = kW - kLeft - kRight;
constexpr double kPlotH = kH - kTop - kBottom;

constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c",
                                    "#9467bd", "#ff7f0e", "#8c564b",
                                    "#17becf", "#7f7f7f"};
constexpr int kPaletteSize = 8;

std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", v);
    return buf;
}

std::string escape_xml(const std::string& s) {
    std::string out;
    out.reserve(s.size());
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            case '\'': out += "&apos;"; break;
            default: out += c;
        }
    }
    return out;
}

}  // namespace

std::string render_curves_svg(
    const std::vector<std::pair<std::string, RunRecord>>& curves) {
    if (curves.empty())
        throw ContractError("render_curves_svg: no curves to plot");
    int64_t max_epochs = 0;
    for (const auto& [label, rec] : curves) {
        if (rec.rows.empty())
            throw ContractError("render_curves_svg: run '" + label +
                                "' has no completed epochs to plot");
        max_epochs = std::max(
            max_epochs, static_cast<int64_t>(rec.rows.back().epoch));
    }

    // A single epoch still needs a nonzero x span.
    double x_lo = 1.0, x_hi = static_cast<double>(max_epochs);
    if (max_epochs <= 1) {
        x_lo = 0.5;
        x_hi = 1.5;
    }
    auto xpos = [&](double e) {
        return kLeft + (e - x_lo) / (x_hi - x_lo) * kPlotW;
    };
    auto ypos = [&](double acc) { return kTop + (1.0 - acc) * kPlotH; };

    std::string out;
    out += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(kW) +
           "\" height=\"" + num(kH) + "\" viewBox=\"0 0 " + num(kW) + " " +
           num(kH) + "\">\n";
    out += "<rect x=\"0\" y=\"0\" width=\"" + num(kW) + "\" height=\"" +
           num(kH) + "\" fill=\"#ffffff\"/>\n";

    // Horizontal gridlines and y tick labels every 0.2.
    for (int i = 0; i <= 5; ++i) {
        double acc = 0.2 * i;
        double y = ypos(acc);
        out += "<line x1=\"" + num(kLeft) + "\" y1=\"" + num(y) + "\" x2=\"" +
               num(kLeft + kPlotW) + "\" y2=\"" + num(y) +
               "\" stroke=\"#dddddd\" stroke-width=\"1\"/>\n";
        char lab[16];
        std::snprintf(lab, sizeof(lab), "%.1f", acc);
        out += "<text x=\"" + num(kLeft - 8) + "\" y=\"" + num(y + 4) +
               "\" text-anchor=\"end\" font-family=\"sans-serif\" "
               "font-size=\"12\">" +
               lab + "</text>\n";
    }

    // Integer epoch ticks, at most ~10 of them.
    int64_t step = std::max<int64_t>(1, (max_epochs + 9) / 10);
    for (int64_t e = 1; e <= max_epochs; e += step) {
        double x = xpos(static_cast<double>(e));
        out += "<line x1=\"" + num(x) + "\" y1=\"" + num(kTop + kPlotH) +
               "\" x2=\"" + num(x) + "\" y2=\"" + num(kTop + kPlotH + 5) +
               "\" stroke=\"#000000\" stroke-width=\"1\"/>\n";
        out += "<text x=\"" + num(x) + "\" y=\"" + num(kTop + kPlotH + 20) +
               "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
               "font-size=\"12\">" +
               std::to_string(e) + "</text>\n";
    }

    // Axes.
    out += "<line x1=\"" + num(kLeft) + "\" y1=\"" + num(kTop) + "\" x2=\"" +
           num(kLeft) + "\" y2=\"" + num(kTop + kPlotH) +
           "\" stroke=\"#000000\" stroke-width=\"1\"/>\n";
    out += "<line x1=\"" + num(kLeft) + "\" y1=\"" + num(kTop + kPlotH) +
           "\" x2=\"" + num(kLeft + kPlotW) + "\" y2=\"" +
           num(kTop + kPlotH) + "\" stroke=\"#000000\" stroke-width=\"1\"/>\n";
    out += "<text x=\"" + num(kLeft + kPlotW / 2) + "\" y=\"" +
           num(kH - 12) +
           "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
           "font-size=\"13\">epoch</text>\n";
    out += "<text x=\"16\" y=\"" + num(kTop + kPlotH / 2) +
           "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
           "font-size=\"13\" transform=\"rotate(-90 16 " +
           num(kTop + kPlotH / 2) +
           ")\">test robust accuracy</text>\n";

    // Curves.
    for (size_t i = 0; i < curves.size(); ++i) {
        const RunRecord& rec = curves[i].second;
        const char* color = kPalette[i % kPaletteSize];
        if (rec.rows.size() == 1) {
            out += "<circle cx=\"" +
                   num(xpos(static_cast<double>(rec.rows[0].epoch))) +
                   "\" cy=\"" + num(ypos(rec.rows[0].test_rob_acc)) +
                   "\" r=\"3\" fill=\"" + std::string(color) + "\"/>\n";
        } else {
            out += "<polyline fill=\"none\" stroke=\"" + std::string(color) +
                   "\" stroke-width=\"1.5\" points=\"";
            for (size_t r = 0; r < rec.rows.size(); ++r) {
                if (r) out += " ";
                out += num(xpos(static_cast<double>(rec.rows[r].epoch))) +
                       "," + num(ypos(rec.rows[r].test_rob_acc));
            }
            out += "\"/>\n";
        }
    }

    // Legend, top-right inside the plot.
    for (size_t i = 0; i < curves.size(); ++i) {
        const char* color = kPalette[i % kPaletteSize];
        double y = kTop + 14 + 18 * static_cast<double>(i);
        double x1 = kLeft + kPlotW - 170, x2 = x1 + 24;
        out += "<line x1=\"" + num(x1) + "\" y1=\"" + num(y) + "\" x2=\"" +
               num(x2) + "\" y2=\"" + num(y) + "\" stroke=\"" +
               std::string(color) + "\" stroke-width=\"2\"/>\n";
        out += "<text x=\"" + num(x2 + 6) + "\" y=\"" + num(y + 4) +
               "\" font-family=\"sans-serif\" font-size=\"12\">" +
               escape_xml(curves[i].first) + "</text>\n";
    }

    out += "</svg>\n";
    return out;
}

void emit_curves_svg(
    const std::vector<std::pair<std::string, RunRecord>>& curves,
    const std::string& path) {
    std::string body = render_curves_svg(curves);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open svg for write: " + path);
    out.write(body.data(), static_cast<std::streamsize>(body.size()));
    out.flush();
    if (!out) throw IoError("failed writing svg: " + path);
}

}  // namespace advlab
