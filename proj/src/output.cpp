#include "conjatlas/output.hpp"

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

namespace conjatlas {

std::string format_number(double v, int precision) {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "%.*g", precision, v);
    return buf;
}

CsvWriter::CsvWriter(std::vector<std::string> columns, int precision)
    : columns_(columns.size()), precision_(precision) {
    for (std::size_t i = 0; i < columns.size(); ++i) {
        if (i) buffer_ += ',';
        buffer_ += columns[i];
    }
    buffer_ += '\n';
}

void CsvWriter::row(const std::vector<double>& values) {
    if (values.size() != columns_) throw InvalidInputError("csv: wrong number of cells");
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (i) buffer_ += ',';
        buffer_ += format_number(values[i], precision_);
    }
    buffer_ += '\n';
}

void CsvWriter::raw_row(const std::vector<std::string>& cells) {
    if (cells.size() != columns_) throw InvalidInputError("csv: wrong number of cells");
    for (std::size_t i = 0; i < cells.size(); ++i) {
        if (i) buffer_ += ',';
        buffer_ += cells[i];
    }
    buffer_ += '\n';
}

void CsvWriter::write(const std::string& path) const { write_text_file(path, buffer_); }

void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write file '" + path + "'");
    out << content;
}

std::string svg_polyline(const std::vector<Vec>& points, const std::vector<Vec>& marks) {
    double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin;
    double ymin = xmin, ymax = -xmin;
    for (const auto& p : points) {
        xmin = std::min(xmin, p(0));
        xmax = std::max(xmax, p(0));
        ymin = std::min(ymin, p(1));
        ymax = std::max(ymax, p(1));
    }
    if (points.empty()) xmin = xmax = ymin = ymax = 0.0;
    const double mx = 0.05 * std::max(xmax - xmin, 1e-9);
    const double my = 0.05 * std::max(ymax - ymin, 1e-9);
    std::ostringstream os;
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"" << format_number(xmin - mx)
       << " " << format_number(ymin - my) << " " << format_number(xmax - xmin + 2 * mx) << " "
       << format_number(ymax - ymin + 2 * my) << "\">\n";
    os << "<polyline fill=\"none\" stroke=\"black\" stroke-width=\""
       << format_number(0.004 * std::max(xmax - xmin + 2 * mx, ymax - ymin + 2 * my))
       << "\" points=\"";
    for (std::size_t i = 0; i < points.size(); ++i) {
        if (i) os << ' ';
        os << format_number(points[i](0)) << ',' << format_number(points[i](1));
    }
    os << "\"/>\n";
    const double r = 0.012 * std::max(xmax - xmin + 2 * mx, ymax - ymin + 2 * my);
    for (const auto& m : marks)
        os << "<circle cx=\"" << format_number(m(0)) << "\" cy=\"" << format_number(m(1))
           << "\" r=\"" << format_number(r) << "\" fill=\"red\"/>\n";
    os << "</svg>\n";
    return os.str();
}

std::string fnv1a_hex(const std::string& content) {
    std::uint64_t hash = 1469598103934665603ull;
    for (unsigned char c : content) {
        hash ^= c;
        hash *= 1099511628211ull;
    }
    char buf[20];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(hash));
    return buf;
}

std::string run_manifest_json(const std::string& command, const std::string& config_text,
                              std::uint64_t seed, int workers, double wall_seconds) {
    std::ostringstream os;
    os << "{\n"
       << "  \"tool\": \"conjatlas\",\n"
       << "  \"version\": \"0.1.0\",\n"
       << "  \"command\": \"" << command << "\",\n"
       << "  \"config_fnv1a\": \"" << fnv1a_hex(config_text) << "\",\n"
       << "  \"seed\": " << seed << ",\n"
       << "  \"workers\": " << workers << ",\n"
       << "  \"wall_seconds\": " << format_number(wall_seconds, 6) << "\n"
       << "}\n";
    return os.str();
}

}  // namespace conjatlas
