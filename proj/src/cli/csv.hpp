#ifndef DRO_CLI_CSV_HPP
#define DRO_CLI_CSV_HPP

#include <cstdio>
#include <fstream>
#include <string>

namespace dro::cli {

// Shortest round-trippable decimal form; keeps CSV output byte-stable.
inline std::string format_number(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  double parsed = 0.0;
  for (int prec = 1; prec <= 16; ++prec) {
    char shorter[40];
    std::snprintf(shorter, sizeof(shorter), "%.*g", prec, v);
    std::sscanf(shorter, "%lf", &parsed);
    if (parsed == v) return shorter;
  }
  return buf;
}

class CsvWriter {
 public:
  CsvWriter(const std::string& path, const std::string& header) : out_(path) {
    if (!out_) throw std::runtime_error("cannot open output file: " + path);
    out_ << header << "\n";
  }

  template <class... Cols>
  void row(Cols... cols) {
    bool first = true;
    ((out_ << (first ? "" : ",") << cell(cols), first = false), ...);
    out_ << "\n";
  }

 private:
  static std::string cell(double v) { return format_number(v); }
  static std::string cell(long long v) { return std::to_string(v); }
  static std::string cell(int v) { return std::to_string(v); }
  static std::string cell(const std::string& s) { return s; }

  std::ofstream out_;
};

}  // namespace dro::cli

#endif  // DRO_CLI_CSV_HPP
