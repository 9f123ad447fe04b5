#pragma once

// Printed per-scenario accuracies (%) for the health experiment under the
// Normal setting, rows in the order None, n1, n2, n3, {n1,n2}, {n1,n3},
// {n2,n3}, {n1,n2,n3}, and the printed Average row.

#include <array>

namespace table_health {

inline constexpr std::array<double, 8> kPrintedProbPct{87.43, 7.01, 3.64, 0.88, 0.32, 0.08, 0.04, 0.003};
inline constexpr std::array<const char*, 8> kLabels{"None", "n1", "n2", "n3", "n1,n2", "n1,n3", "n2,n3", "n1,n2,n3"};

inline constexpr std::array<double, 8> kResiliNetPlus{97.85, 97.35, 94.32, 97.74, 8.02, 97.33, 7.99, 7.98};
inline constexpr std::array<double, 8> kResiliNet{97.77, 93.26, 95.59, 97.12, 8.12, 91.12, 7.86, 8.11};
inline constexpr std::array<double, 8> kDfg{97.90, 64.42, 22.49, 92.48, 8.2, 60.13, 7.98, 7.89};
inline constexpr std::array<double, 8> kVanilla{97.85, 7.95, 7.99, 8.10, 7.93, 7.98, 7.97, 7.91};

inline constexpr double kAvgResiliNetPlus = 97.36;
inline constexpr double kAvgResiliNet = 97.02;
inline constexpr double kAvgDfg = 92.21;
inline constexpr double kAvgVanilla = 86.57;

// Failure probabilities of n1, n2, n3 under Normal.
inline constexpr std::array<double, 3> kNormalP{0.08, 0.04, 0.01};

}  // namespace table_health
