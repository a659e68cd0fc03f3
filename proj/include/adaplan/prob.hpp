#pragma once

#include <span>
#include <vector>

namespace adaplan {

// floor applied to p(true) before taking the log
inline constexpr double kProbabilityFloor = 1e-12;

// Max-subtracted softmax; throws on empty or non-finite input.
std::vector<double> softmax(std::span<const double> logits);

// -log max(p[index], 1e-12)
double cross_entropy(std::span<const double> probabilities, int index);

// index of the largest entry, lowest index on ties
int argmax(std::span<const double> values);

}  // namespace adaplan
