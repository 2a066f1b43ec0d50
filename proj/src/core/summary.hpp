#pragma once

#include <string>
#include <vector>

namespace convprobe {

struct MeanStd {
  double mean = 0;
  double std = 0;  // sample (n-1) standard deviation
};

// Needs at least two values.
MeanStd summarize(const std::vector<double>& values);

// "0.830 ± 0.034"
std::string format_mean_std(const MeanStd& m, int digits = 3);

}  // namespace convprobe
