#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "rmabm/economy.hpp"
#include "rmabm/errors.hpp"
#include "rmabm/params.hpp"
#include "rmabm/rng.hpp"
#include "rmabm/types.hpp"

namespace rmabm {

// Log-scale state observation of one firm against the market.
struct Observation {
  double log_price_delta = 0.0;  // log(P_i / P_t)
  double log_stock = 0.0;        // log(Y_i / Y_d)
};

struct DiscreteState {
  int price_bin = 0;
  int stock_bin = 0;
};

// Multiplicative adjustments in log-units, taken from the action grid.
struct ActionPair {
  double price_action = 0.0;     // a_P
  double quantity_action = 0.0;  // a_Y
};

// Action-value table over (price_bin, stock_bin) x (price_action_idx,
// quantity_action_idx). Grid geometry travels with the table so a dump is
// self-describing.
struct QTable {
  int n_states = 0;
  int n_actions = 0;
  double obs_min = 0.0, obs_max = 0.0;
  double act_min = 0.0, act_max = 0.0;
  std::vector<double> values;
  std::vector<std::uint32_t> update_count;

  QTable() = default;
  explicit QTable(const RLConfig& cfg)
      : n_states(cfg.n_states),
        n_actions(cfg.n_actions),
        obs_min(cfg.obs_min),
        obs_max(cfg.obs_max),
        act_min(cfg.act_min),
        act_max(cfg.act_max) {
    const std::size_t n = static_cast<std::size_t>(n_states) * n_states * n_actions * n_actions;
    values.assign(n, 0.0);  // empty table: all values zero
    update_count.assign(n, 0);
  }

  std::size_t index(const DiscreteState& s, int a_price, int a_quantity) const {
    return ((static_cast<std::size_t>(s.price_bin) * n_states + s.stock_bin) * n_actions +
            a_price) * n_actions + a_quantity;
  }

  double& at(const DiscreteState& s, int a_price, int a_quantity) {
    return values[index(s, a_price, a_quantity)];
  }
  double at(const DiscreteState& s, int a_price, int a_quantity) const {
    return values[index(s, a_price, a_quantity)];
  }

  double max_over_actions(const DiscreteState& s) const {
    const double* slice = values.data() + index(s, 0, 0);
    double best = slice[0];
    const int n = n_actions * n_actions;
    for (int i = 1; i < n; ++i) best = std::max(best, slice[i]);
    return best;
  }

  double action_grid_point(int idx) const {
    return act_min + idx * (act_max - act_min) / (n_actions - 1);
  }

  bool same_shape(const QTable& o) const {
    return n_states == o.n_states && n_actions == o.n_actions;
  }
};

// Index of the nearest pole of the uniform grid p_k = lo + k*(hi-lo)/(n-1).
// Ties break toward the lower index; out-of-range values map to the nearest
// extreme pole.
inline int discretize(double x, int n, double lo, double hi) {
  const double step = (hi - lo) / (n - 1);
  int best = 0;
  double best_dist = std::abs(x - lo);
  for (int k = 1; k < n; ++k) {
    const double dist = std::abs(x - (lo + k * step));
    if (dist < best_dist) {
      best_dist = dist;
      best = k;
    }
  }
  return best;
}

// Output and demand are floored at kQuantityFloor before the ratio so the
// logs stay finite at zero output or demand.
inline Observation observe_values(double price, double avg_price, double output, double demand) {
  Observation obs;
  obs.log_price_delta = std::log(price / avg_price);
  obs.log_stock = std::log(std::max(output, kQuantityFloor) / std::max(demand, kQuantityFloor));
  return obs;
}

inline Observation observe(const CFirmState& firm, double avg_price) {
  return observe_values(firm.price, avg_price, firm.output, firm.demand);
}

inline DiscreteState discretize_observation(const Observation& obs, const QTable& q) {
  return DiscreteState{discretize(obs.log_price_delta, q.n_states, q.obs_min, q.obs_max),
                       discretize(obs.log_stock, q.n_states, q.obs_min, q.obs_max)};
}

// Epsilon-greedy over the n_A x n_A action slice. Greedy argmax ties break
// uniformly at random.
inline std::pair<int, int> select_action(const QTable& q, const DiscreteState& s, double epsilon,
                                         Rng& rng) {
  if (rng.uniform() < epsilon) {
    return {rng.uniform_index(q.n_actions), rng.uniform_index(q.n_actions)};
  }
  const double* slice = q.values.data() + q.index(s, 0, 0);
  int best_p = 0, best_y = 0;
  double best = slice[0];
  int ties = 1;
  for (int ap = 0; ap < q.n_actions; ++ap) {
    for (int ay = 0; ay < q.n_actions; ++ay) {
      if (ap == 0 && ay == 0) continue;
      const double v = slice[ap * q.n_actions + ay];
      if (v > best) {
        best = v;
        best_p = ap;
        best_y = ay;
        ties = 1;
      } else if (v == best) {
        ++ties;
        if (rng.uniform_index(ties) == 0) {
          best_p = ap;
          best_y = ay;
        }
      }
    }
  }
  return {best_p, best_y};
}

inline ActionPair make_action(const QTable& q, int a_price_idx, int a_quantity_idx) {
  return ActionPair{q.action_grid_point(a_price_idx), q.action_grid_point(a_quantity_idx)};
}

// Multiplicative update of price and target: X' = X * e^a. The target is
// floored at kQuantityFloor first so a zero target can still grow. Wide
// clamps guard against unbounded drift in degenerate configurations.
inline FirmDecision apply_action(double price, double target_output, const ActionPair& a) {
  FirmDecision d;
  d.next_price = std::clamp(price * std::exp(a.price_action), 1e-12, 1e12);
  d.next_target_output =
      std::min(std::max(target_output, kQuantityFloor) * std::exp(a.quantity_action), 1e12);
  return d;
}

// Profit as reward while solvent, a fixed penalty on bankruptcy (assets
// at or below zero).
inline double compute_reward(double profit, double assets, double penalty) {
  return assets > 0.0 ? profit : penalty;
}

// One Bellman update:
//   q[s,a] <- (1-alpha) q[s,a] + alpha (r + gamma max_a' q[s',a'])
inline void q_update(QTable& q, const DiscreteState& s, int a_price, int a_quantity, double reward,
                     const DiscreteState& s_next, double alpha, double gamma) {
  const std::size_t idx = q.index(s, a_price, a_quantity);
  q.values[idx] = (1.0 - alpha) * q.values[idx] +
                  alpha * (reward + gamma * q.max_over_actions(s_next));
  q.update_count[idx] += 1;
}

// Discounted sum with the first reward weighted gamma^1.
inline double cumulative_return(std::span<const double> rewards, double gamma) {
  double total = 0.0;
  double weight = gamma;
  for (double r : rewards) {
    total += weight * r;
    weight *= gamma;
  }
  return total;
}

// --- QTable dump (versioned binary, bit-exact round trip) -------------------

namespace detail {

inline void write_bytes(std::ostream& out, const void* p, std::size_t n) {
  out.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

inline void read_bytes(std::istream& in, void* p, std::size_t n, const std::string& what) {
  in.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
  if (!in) throw IoError("truncated q-table data while reading " + what);
}

template <typename T>
void write_pod(std::ostream& out, T v) {
  write_bytes(out, &v, sizeof v);
}

template <typename T>
T read_pod(std::istream& in, const std::string& what) {
  T v;
  read_bytes(in, &v, sizeof v, what);
  return v;
}

}  // namespace detail

inline constexpr char kQTableMagic[4] = {'R', 'M', 'Q', 'T'};
inline constexpr std::uint32_t kQTableVersion = 1;

inline void write_qtable(std::ostream& out, const QTable& q) {
  detail::write_bytes(out, kQTableMagic, 4);
  detail::write_pod<std::uint32_t>(out, kQTableVersion);
  detail::write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(q.n_states));
  detail::write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(q.n_actions));
  detail::write_pod<double>(out, q.obs_min);
  detail::write_pod<double>(out, q.obs_max);
  detail::write_pod<double>(out, q.act_min);
  detail::write_pod<double>(out, q.act_max);
  detail::write_bytes(out, q.values.data(), q.values.size() * sizeof(double));
  detail::write_bytes(out, q.update_count.data(), q.update_count.size() * sizeof(std::uint32_t));
}

inline QTable read_qtable(std::istream& in) {
  char magic[4];
  detail::read_bytes(in, magic, 4, "magic");
  if (std::memcmp(magic, kQTableMagic, 4) != 0) throw IoError("not a q-table dump");
  const auto version = detail::read_pod<std::uint32_t>(in, "version");
  if (version != kQTableVersion) throw IoError("unsupported q-table version");
  QTable q;
  q.n_states = static_cast<int>(detail::read_pod<std::uint32_t>(in, "n_states"));
  q.n_actions = static_cast<int>(detail::read_pod<std::uint32_t>(in, "n_actions"));
  if (q.n_states < 1 || q.n_actions < 1 || q.n_states > 100000 || q.n_actions > 100000) {
    throw IoError("corrupt q-table shape");
  }
  q.obs_min = detail::read_pod<double>(in, "obs_min");
  q.obs_max = detail::read_pod<double>(in, "obs_max");
  q.act_min = detail::read_pod<double>(in, "act_min");
  q.act_max = detail::read_pod<double>(in, "act_max");
  const std::size_t n = static_cast<std::size_t>(q.n_states) * q.n_states * q.n_actions * q.n_actions;
  q.values.resize(n);
  q.update_count.resize(n);
  detail::read_bytes(in, q.values.data(), n * sizeof(double), "values");
  detail::read_bytes(in, q.update_count.data(), n * sizeof(std::uint32_t), "update counts");
  return q;
}

}  // namespace rmabm
