#include "prorad/plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "prorad/error.hpp"

namespace prorad {

namespace {

std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

std::string escape(const std::string& s) {
    std::string o;
    for (char c : s) {
        switch (c) {
            case '<': o += "&lt;"; break;
            case '>': o += "&gt;"; break;
            case '&': o += "&amp;"; break;
            case '"': o += "&quot;"; break;
            default: o += c;
        }
    }
    return o;
}

std::string comment(const std::string& note) {
    if (note.empty()) return {};
    std::string n = note;
    for (std::size_t p; (p = n.find("--")) != std::string::npos;) n.replace(p, 2, "- ");
    return "<!-- " + n + " -->\n";
}

constexpr const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"};

}  // namespace

std::string line_chart_svg(const std::string& title, const std::string& xlabel, const std::string& ylabel,
                           const std::vector<Series>& series, double xmax, double ymax, const std::string& note) {
    const double W = 480, H = 400, L = 60, R = 20, T = 40, B = 50;
    const double pw = W - L - R, ph = H - T - B;
    xmax = xmax > 0 ? xmax : 1;
    ymax = ymax > 0 ? ymax : 1;
    auto px = [&](double x) { return L + pw * std::clamp(x / xmax, 0.0, 1.0); };
    auto py = [&](double y) { return T + ph * (1 - std::clamp(y / ymax, 0.0, 1.0)); };
    std::string s = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"480\" height=\"400\" viewBox=\"0 0 480 400\">\n";
    s += comment(note);
    s += "<rect width=\"480\" height=\"400\" fill=\"white\"/>\n";
    s += "<text x=\"240\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"15\">" + escape(title) + "</text>\n";
    s += "<rect x=\"" + num(L) + "\" y=\"" + num(T) + "\" width=\"" + num(pw) + "\" height=\"" + num(ph) +
         "\" fill=\"none\" stroke=\"black\"/>\n";
    for (int i = 0; i <= 4; ++i) {
        const double fx = xmax * i / 4, fy = ymax * i / 4;
        s += "<text x=\"" + num(px(fx)) + "\" y=\"" + num(T + ph + 16) +
             "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">" + num(fx) + "</text>\n";
        s += "<text x=\"" + num(L - 6) + "\" y=\"" + num(py(fy) + 4) +
             "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">" + num(fy) + "</text>\n";
    }
    s += "<text x=\"" + num(L + pw / 2) + "\" y=\"" + num(H - 12) +
         "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">" + escape(xlabel) + "</text>\n";
    s += "<text x=\"16\" y=\"" + num(T + ph / 2) + "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\" transform=\"rotate(-90 16 " +
         num(T + ph / 2) + ")\">" + escape(ylabel) + "</text>\n";
    for (std::size_t k = 0; k < series.size(); ++k) {
        const auto& sr = series[k];
        const char* color = kColors[k % 5];
        s += "<polyline fill=\"none\" stroke=\"" + std::string(color) + "\" stroke-width=\"2\" points=\"";
        for (std::size_t i = 0; i < sr.x.size() && i < sr.y.size(); ++i) {
            if (!std::isfinite(sr.x[i]) || !std::isfinite(sr.y[i])) continue;
            s += num(px(sr.x[i])) + "," + num(py(sr.y[i])) + " ";
        }
        s += "\"/>\n";
        s += "<text x=\"" + num(L + pw - 8) + "\" y=\"" + num(T + ph - 10 - 16.0 * k) + "\" text-anchor=\"end\" fill=\"" + color +
             "\" font-family=\"sans-serif\" font-size=\"12\">" + escape(sr.name) + "</text>\n";
    }
    s += "</svg>\n";
    return s;
}

std::string bar_chart_svg(const std::string& title, const std::vector<std::string>& labels, const std::vector<double>& values,
                          const std::string& note) {
    const double row = 18, T = 40, L = 300, pw = 260;
    const double H = T + row * static_cast<double>(labels.size()) + 30;
    double vmax = 0;
    for (double v : values) vmax = std::max(vmax, std::abs(v));
    if (vmax == 0) vmax = 1;
    const double zero = L + pw / 2;
    std::string s = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"600\" height=\"" + num(H) + "\" viewBox=\"0 0 600 " + num(H) + "\">\n";
    s += comment(note);
    s += "<rect width=\"600\" height=\"" + num(H) + "\" fill=\"white\"/>\n";
    s += "<text x=\"300\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"15\">" + escape(title) + "</text>\n";
    for (std::size_t i = 0; i < labels.size() && i < values.size(); ++i) {
        const double y = T + row * static_cast<double>(i);
        const double w = pw / 2 * std::abs(values[i]) / vmax;
        const double x = values[i] >= 0 ? zero : zero - w;
        s += "<text x=\"" + num(L - 6) + "\" y=\"" + num(y + 12) + "\" text-anchor=\"end\" font-family=\"monospace\" font-size=\"10\">" +
             escape(labels[i]) + "</text>\n";
        s += "<rect x=\"" + num(x) + "\" y=\"" + num(y + 2) + "\" width=\"" + num(w) + "\" height=\"" + num(row - 4) + "\" fill=\"" +
             (values[i] >= 0 ? "#d62728" : "#1f77b4") + "\"/>\n";
    }
    s += "<line x1=\"" + num(zero) + "\" y1=\"" + num(T) + "\" x2=\"" + num(zero) + "\" y2=\"" + num(H - 30) +
         "\" stroke=\"black\"/>\n";
    s += "</svg>\n";
    return s;
}

void write_text(const std::string& text, const std::string& path) {
    const std::filesystem::path p(path);
    if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
    std::ofstream out(p, std::ios::binary);
    if (!out) throw Error(ErrorCode::IoFailure, "cannot write " + path);
    out << text;
    if (!out) throw Error(ErrorCode::IoFailure, "write failed for " + path);
}

}  // namespace prorad
