#pragma once

#include <cmath>

#include "rmabm/rng.hpp"
#include "rmabm/types.hpp"

namespace rmabm {

// Last-step signals feeding the trend-following rule.
struct HeuristicInputs {
  double price = 1.0;        // P_i, > 0
  double output = 0.0;       // Y_i
  double target = 0.0;       // Y*_i
  double firm_stock = 0.0;   // Delta_Y = Y_i - Y_d_i
  double price_delta = 0.0;  // Delta_P = P_i - P_t
};

// The bounded-rational price/quantity rule. The four sign quadrants of
// (firm_stock, price_delta) map to exactly one adjustment each:
//
//   stock <= 0, below market  -> raise price by (1+eta)
//   stock >  0, at/above      -> cut price by (1-eta)
//   stock <= 0, at/above      -> raise target to Y + rho*|stock|
//   stock >  0, below market  -> cut target to Y - rho*|stock|
//
// Boundary ties: stock == 0 counts as "<= 0", price_delta == 0 as ">= 0".
inline FirmDecision heuristic_decide_with_eta(const HeuristicInputs& in, double rho, double eta) {
  FirmDecision d{in.price, in.target};
  const bool surplus = in.firm_stock > 0.0;
  const bool at_or_above_market = in.price_delta >= 0.0;
  if (!surplus && !at_or_above_market) {
    d.next_price = in.price * (1.0 + eta);
  } else if (surplus && at_or_above_market) {
    d.next_price = in.price * (1.0 - eta);
  } else if (!surplus) {
    d.next_target_output = in.output + rho * std::abs(in.firm_stock);
  } else {
    d.next_target_output = in.output - rho * std::abs(in.firm_stock);
  }
  if (d.next_target_output < 0.0) d.next_target_output = 0.0;
  return d;
}

// eta is drawn fresh per call, eta ~ U(0, eta_bar).
inline FirmDecision heuristic_decide(const HeuristicInputs& in, double rho, double eta_bar, Rng& rng) {
  return heuristic_decide_with_eta(in, rho, rng.uniform(0.0, eta_bar));
}

}  // namespace rmabm
