#pragma once

#include <ctime>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "lcl/sha256.hpp"

// Experiment records (JSONL), CSV tables and a standalone SVG line plotter.
// Records carry everything needed to regenerate a figure: config, its hash,
// the master seed and every estimate with its standard error.

namespace lcl {

#ifndef LCL_VERSION
#define LCL_VERSION "0.0.0"
#endif

inline std::string iso8601_now() {
    std::time_t t = std::time(nullptr);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
    return buf;
}

inline nlohmann::json make_record(const std::string& subcommand,
                                  const nlohmann::json& config,
                                  std::uint64_t seed) {
    nlohmann::json rec;
    rec["schema_version"] = 1;
    rec["subcommand"] = subcommand;
    rec["config"] = config;
    rec["config_sha256"] = sha256_hex(config.dump());
    rec["seed"] = seed;
    rec["started_at"] = iso8601_now();
    rec["library_version"] = LCL_VERSION;
    rec["results"] = nlohmann::json::object();
    return rec;
}

inline void append_jsonl(const std::string& path, const nlohmann::json& rec) {
    std::ofstream os(path, std::ios::app);
    if (!os) throw std::runtime_error("cannot open output file: " + path);
    os << rec.dump() << "\n";
}

inline void write_csv(const std::string& path,
                      const std::vector<std::string>& header,
                      const std::vector<std::vector<double>>& rows) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot open output file: " + path);
    os << std::setprecision(17);
    for (size_t i = 0; i < header.size(); ++i)
        os << header[i] << (i + 1 < header.size() ? ',' : '\n');
    for (const auto& row : rows)
        for (size_t i = 0; i < row.size(); ++i)
            os << row[i] << (i + 1 < row.size() ? ',' : '\n');
}

struct SvgSeries {
    std::string name;
    std::vector<double> x, y;
};

// Minimal standalone SVG line plot (optionally log-log); figures of record
// must not depend on an external plotting service.
inline void write_svg_plot(const std::string& path, const std::string& title,
                           const std::vector<SvgSeries>& series,
                           bool loglog = false) {
    const int w = 640, h = 420, ml = 70, mr = 20, mt = 40, mb = 50;
    double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
    auto tx = [&](double v) { return loglog ? std::log10(v) : v; };
    for (const auto& s : series)
        for (size_t i = 0; i < s.x.size(); ++i) {
            xmin = std::min(xmin, tx(s.x[i]));
            xmax = std::max(xmax, tx(s.x[i]));
            ymin = std::min(ymin, tx(s.y[i]));
            ymax = std::max(ymax, tx(s.y[i]));
        }
    if (!(xmax > xmin)) xmax = xmin + 1;
    if (!(ymax > ymin)) ymax = ymin + 1;
    auto px = [&](double v) {
        return ml + (tx(v) - xmin) / (xmax - xmin) * (w - ml - mr);
    };
    auto py = [&](double v) {
        return h - mb - (tx(v) - ymin) / (ymax - ymin) * (h - mt - mb);
    };
    static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                   "#ff7f0e"};
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot open output file: " + path);
    os << "<svg xmlns='http://www.w3.org/2000/svg' width='" << w << "' height='"
       << h << "'>\n<rect width='100%' height='100%' fill='white'/>\n";
    os << "<text x='" << w / 2 << "' y='24' text-anchor='middle' font-size='16'>"
       << title << "</text>\n";
    os << "<rect x='" << ml << "' y='" << mt << "' width='" << w - ml - mr
       << "' height='" << h - mt - mb << "' fill='none' stroke='#888'/>\n";
    for (int g = 0; g <= 4; ++g) {
        const double fx = xmin + (xmax - xmin) * g / 4;
        const double fy = ymin + (ymax - ymin) * g / 4;
        os << "<text x='" << ml + (w - ml - mr) * g / 4 << "' y='" << h - mb + 18
           << "' text-anchor='middle' font-size='11'>" << std::setprecision(3)
           << (loglog ? std::pow(10.0, fx) : fx) << "</text>\n";
        os << "<text x='" << ml - 8 << "' y='" << h - mb - (h - mt - mb) * g / 4 + 4
           << "' text-anchor='end' font-size='11'>" << std::setprecision(3)
           << (loglog ? std::pow(10.0, fy) : fy) << "</text>\n";
    }
    int ci = 0;
    for (const auto& s : series) {
        os << "<polyline fill='none' stroke='" << colors[ci % 5]
           << "' stroke-width='1.5' points='";
        for (size_t i = 0; i < s.x.size(); ++i)
            os << px(s.x[i]) << ',' << py(s.y[i]) << ' ';
        os << "'/>\n";
        for (size_t i = 0; i < s.x.size(); ++i)
            os << "<circle cx='" << px(s.x[i]) << "' cy='" << py(s.y[i])
               << "' r='3' fill='" << colors[ci % 5] << "'/>\n";
        os << "<text x='" << w - mr - 6 << "' y='" << mt + 16 + 14 * ci
           << "' text-anchor='end' font-size='12' fill='" << colors[ci % 5]
           << "'>" << s.name << "</text>\n";
        ++ci;
    }
    os << "</svg>\n";
}

}  // namespace lcl
