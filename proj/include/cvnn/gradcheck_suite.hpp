#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace cvnn {

struct GradcheckCase {
  std::string name;
  /// conv, activation, operator, network, loss or metric.
  std::string kind;
  double max_relative_error = 0.0;
};

/// Central-difference checks (step 1e-5) of every differentiable primitive,
/// every activation, dc_step, both networks at toy size and the loss and
/// metrics. Inputs are sampled away from non-differentiable sets.
std::vector<GradcheckCase> run_gradcheck_suite(std::uint64_t seed = 7);

}  // namespace cvnn
