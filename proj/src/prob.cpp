#include "adaplan/prob.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "adaplan/errors.hpp"

namespace adaplan {

std::vector<double> softmax(std::span<const double> logits) {
  if (logits.empty()) throw ShapeError("softmax: empty logits");
  double hi = logits[0];
  for (double z : logits) {
    if (!std::isfinite(z)) throw NumericError("softmax: non-finite logit");
    hi = std::max(hi, z);
  }
  std::vector<double> p(logits.size());
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    p[i] = std::exp(logits[i] - hi);
    total += p[i];
  }
  for (double& v : p) v /= total;
  return p;
}

double cross_entropy(std::span<const double> probabilities, int index) {
  if (index < 0 || static_cast<std::size_t>(index) >= probabilities.size()) {
    throw std::out_of_range("cross_entropy: action index out of range");
  }
  return -std::log(std::max(probabilities[index], kProbabilityFloor));
}

int argmax(std::span<const double> values) {
  if (values.empty()) throw ShapeError("argmax: empty vector");
  int best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[best]) best = static_cast<int>(i);
  }
  return best;
}

}  // namespace adaplan
