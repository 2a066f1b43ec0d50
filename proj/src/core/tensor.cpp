#include "tensor.hpp"

#include <cstring>
#include <sstream>

namespace convprobe {

const char* error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "invalid argument";
    case ErrorCode::kShapeMismatch: return "shape mismatch";
    case ErrorCode::kBadMagic: return "bad magic";
    case ErrorCode::kTruncated: return "truncated file";
    case ErrorCode::kSpecMismatch: return "spec mismatch";
    case ErrorCode::kIo: return "i/o error";
    case ErrorCode::kData: return "data error";
    case ErrorCode::kDivergence: return "training divergence";
    case ErrorCode::kDegenerate: return "degenerate input";
  }
  return "unknown";
}

std::int64_t shape_numel(const Shape& shape) {
  std::int64_t n = 1;
  for (std::int64_t e : shape) n *= e;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

bool bit_identical(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) return false;
  return a.size() == 0 ||
         std::memcmp(a.raw(), b.raw(), static_cast<std::size_t>(a.size()) * sizeof(float)) == 0;
}

}  // namespace convprobe
