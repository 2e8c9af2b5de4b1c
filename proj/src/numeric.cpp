#include "fmm/numeric.hpp"

#include <stdexcept>
#include <vector>

namespace fmm {

std::size_t sample_log_categorical(std::span<const double> log_weights, Rng& rng) {
  const double lse = log_sum_exp(log_weights);
  if (!std::isfinite(lse)) throw std::invalid_argument("sample_log_categorical: no finite weight");
  double u = uniform01(rng);
  std::size_t last = 0;
  for (std::size_t i = 0; i < log_weights.size(); ++i) {
    if (log_weights[i] == kNegInf) continue;
    last = i;
    u -= std::exp(log_weights[i] - lse);
    if (u < 0.0) return i;
  }
  return last;
}

}  // namespace fmm
