#include "wmobs/random.hpp"

#include <cmath>
#include <numbers>
#include <vector>

#include "wmobs/error.hpp"

namespace wmobs {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidSpec: return "InvalidSpec";
    case ErrorCode::InvalidLength: return "InvalidLength";
    case ErrorCode::WrongScheme: return "WrongScheme";
    case ErrorCode::TooShort: return "TooShort";
    case ErrorCode::DegenerateDist: return "DegenerateDist";
    case ErrorCode::EmptyMessage: return "EmptyMessage";
    case ErrorCode::InvalidCount: return "InvalidCount";
    case ErrorCode::NoKeys: return "NoKeys";
    case ErrorCode::InsufficientNulls: return "InsufficientNulls";
    case ErrorCode::SizeMismatch: return "SizeMismatch";
    case ErrorCode::EmptyTestSet: return "EmptyTestSet";
    case ErrorCode::EmptyOutput: return "EmptyOutput";
    case ErrorCode::MissingClass: return "MissingClass";
    case ErrorCode::NonFiniteLoss: return "NonFiniteLoss";
    case ErrorCode::BadK: return "BadK";
    case ErrorCode::InsufficientPool: return "InsufficientPool";
    case ErrorCode::PoolTooSmall: return "PoolTooSmall";
    case ErrorCode::BadAxis: return "BadAxis";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::SchemaError: return "SchemaError";
    case ErrorCode::EmptyReport: return "EmptyReport";
    case ErrorCode::MetricMissing: return "MetricMissing";
  }
  return "Unknown";
}

std::uint64_t fnv1a64(std::span<const std::int32_t> values, std::uint64_t h) {
  for (std::int32_t v : values) {
    auto u = static_cast<std::uint32_t>(v);
    for (int b = 0; b < 4; ++b) {
      h ^= (u >> (8 * b)) & 0xffU;
      h *= 0x100000001b3ULL;
    }
  }
  return h;
}

std::uint64_t fnv1a64(std::initializer_list<std::int32_t> values) {
  return fnv1a64(std::span<const std::int32_t>(values.begin(), values.size()));
}

std::uint64_t RandomStream::below(std::uint64_t bound) {
  // Lemire-free plain rejection: keep it obviously portable.
  const std::uint64_t limit = UINT64_MAX - (UINT64_MAX % bound);
  std::uint64_t r;
  do {
    r = next_u64();
  } while (r >= limit);
  return r % bound;
}

double RandomStream::normal() {
  // Box-Muller, one output per call; 1 - u keeps the log argument in (0, 1].
  double u1 = 1.0 - uniform();
  double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

double RandomStream::gamma(double shape) {
  // Marsaglia-Tsang; shapes below one are boosted by U^(1/shape).
  if (shape < 1.0) {
    double g = gamma(shape + 1.0);
    double u = 1.0 - uniform();
    return g * std::pow(u, 1.0 / shape);
  }
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double x = normal();
    double v = 1.0 + c * x;
    if (v <= 0.0) continue;
    v = v * v * v;
    double u = 1.0 - uniform();
    if (std::log(u) < 0.5 * x * x + d - d * v + d * std::log(v)) return d * v;
  }
}

std::uint64_t derive_seed(std::uint64_t master, std::int32_t entity, std::int32_t index,
                          std::int32_t salt) {
  return splitmix64(master ^ fnv1a64({entity, index, salt}));
}

}  // namespace wmobs
