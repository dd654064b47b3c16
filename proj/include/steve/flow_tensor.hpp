#pragma once

#include <algorithm>
#include <cstddef>
#include <vector>

#include "steve/errors.hpp"

namespace steve::data {

// Dense [steps, regions, channels] flow tensor, row-major float32.
struct FlowTensor {
  int steps = 0;
  int regions = 0;
  int channels = 0;
  std::vector<float> values;

  FlowTensor() = default;
  FlowTensor(int t, int n, int d)
      : steps(t), regions(n), channels(d),
        values(static_cast<std::size_t>(t) * n * d, 0.0f) {}

  float at(int t, int n, int c) const {
    return values[(static_cast<std::size_t>(t) * regions + n) * channels + c];
  }
  float& at(int t, int n, int c) {
    return values[(static_cast<std::size_t>(t) * regions + n) * channels + c];
  }

  // First k steps (e.g. the training portion for capacities/clustering).
  FlowTensor head(int k) const {
    if (k < 1 || k > steps) throw ShapeError("FlowTensor::head: bad step count");
    FlowTensor out(k, regions, channels);
    std::copy(values.begin(),
              values.begin() + static_cast<std::size_t>(k) * regions * channels,
              out.values.begin());
    return out;
  }
};

}  // namespace steve::data
