#ifndef CONJATLAS_OUTPUT_HPP
#define CONJATLAS_OUTPUT_HPP

#include <string>
#include <vector>

#include "conjatlas/types.hpp"

namespace conjatlas {

/// Shortest text for a double at 12 significant digits; byte-stable across
/// runs for identical inputs.
std::string format_number(double v, int precision = 12);

/// CSV with a header row, comma separator and '.' decimals.
class CsvWriter {
  public:
    explicit CsvWriter(std::vector<std::string> columns, int precision = 12);
    void row(const std::vector<double>& values);
    void raw_row(const std::vector<std::string>& cells);
    const std::string& str() const { return buffer_; }
    void write(const std::string& path) const;

  private:
    std::size_t columns_;
    int precision_;
    std::string buffer_;
};

void write_text_file(const std::string& path, const std::string& content);

/// Minimal SVG polyline of 2d points: viewBox from the data bounds plus a 5%
/// margin, coordinates at full output precision.
std::string svg_polyline(const std::vector<Vec>& points, const std::vector<Vec>& marks = {});

/// FNV-1a 64-bit content fingerprint, hex encoded.
std::string fnv1a_hex(const std::string& content);

/// Run manifest accompanying every artifact: config fingerprint, tool
/// version, command, seed and wall time.
std::string run_manifest_json(const std::string& command, const std::string& config_text,
                              std::uint64_t seed, int workers, double wall_seconds);

}  // namespace conjatlas

#endif
