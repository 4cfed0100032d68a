#pragma once

namespace rmabm {

// What every C-firm policy must emit each step.
struct FirmDecision {
  double next_price = 1.0;          // > 0
  double next_target_output = 0.0;  // >= 0
};

// Goods quantities are floored at this value before ratios/logarithms.
inline constexpr double kQuantityFloor = 1e-6;

}  // namespace rmabm
