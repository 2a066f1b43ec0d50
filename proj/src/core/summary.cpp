#include "summary.hpp"

#include <cmath>
#include <cstdio>

#include "errors.hpp"

namespace convprobe {

MeanStd summarize(const std::vector<double>& values) {
  require(values.size() >= 2, ErrorCode::kInvalidArgument,
          "mean ± std needs at least 2 values, got " + std::to_string(values.size()));
  long double sum = 0;
  for (double v : values) sum += v;
  const long double mean = sum / values.size();
  long double sq = 0;
  for (double v : values) sq += (v - mean) * (v - mean);
  return {static_cast<double>(mean), static_cast<double>(std::sqrt(sq / (values.size() - 1)))};
}

std::string format_mean_std(const MeanStd& m, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f ± %.*f", digits, m.mean, digits, m.std);
  return buf;
}

}  // namespace convprobe
